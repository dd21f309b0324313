//! Fixed vocabulary shared by the simulated reader and the claim extractor:
//! object categories with aliases, colors and number words.

/// Canonical object categories.
pub const CATEGORIES: [&str; 14] = [
    "person",
    "cup",
    "grocery bag",
    "chair",
    "table",
    "bottle",
    "ball",
    "book",
    "box",
    "plant",
    "lamp",
    "dog",
    "car",
    "traffic light",
];

/// Alias → canonical category.
pub const ALIASES: [(&str, &str); 8] = [
    ("bag", "grocery bag"),
    ("shopping bag", "grocery bag"),
    ("people", "person"),
    ("persons", "person"),
    ("man", "person"),
    ("men", "person"),
    ("woman", "person"),
    ("women", "person"),
];

pub const COLORS: [&str; 11] =
    ["red", "green", "blue", "yellow", "brown", "black", "white", "gray", "orange", "purple", "pink"];

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

pub fn plural(category: &str) -> String {
    match category {
        "person" => "people".into(),
        c if c.ends_with('s') || c.ends_with('x') || c.ends_with("ch") => format!("{c}es"),
        c => format!("{c}s"),
    }
}

/// Singular or plural noun phrase for `count` items.
pub fn noun(category: &str, count: u32) -> String {
    if count == 1 {
        category.to_string()
    } else {
        plural(category)
    }
}

pub fn number_word(n: u32) -> String {
    NUMBER_WORDS.get(n as usize).map_or_else(|| n.to_string(), |w| w.to_string())
}

pub fn parse_number(word: &str) -> Option<u32> {
    let w = word.to_ascii_lowercase();
    NUMBER_WORDS
        .iter()
        .position(|n| *n == w)
        .map(|i| i as u32)
        .or_else(|| w.parse().ok())
}

/// Canonical category for a noun phrase (singular, plural or alias), case-insensitive.
pub fn canonical_category(phrase: &str) -> Option<&'static str> {
    let p = phrase.trim().to_ascii_lowercase();
    let p = p.split_whitespace().collect::<Vec<_>>().join(" ");
    for c in CATEGORIES {
        if p == c || p == plural(c) {
            return Some(c);
        }
    }
    for (alias, c) in ALIASES {
        if p == alias || p == plural(alias) {
            return Some(c);
        }
    }
    None
}

/// Canonical label for free text: the category if it is one, else trimmed lowercase.
pub fn canonical_label(text: &str) -> String {
    canonical_category(text)
        .map(str::to_string)
        .unwrap_or_else(|| text.trim().to_ascii_lowercase().split_whitespace().collect::<Vec<_>>().join(" "))
}

pub fn is_color(word: &str) -> bool {
    COLORS.contains(&word.to_ascii_lowercase().as_str())
}

/// All noun forms the extractor should recognize, longest first so that
/// "grocery bags" wins over "bags".
pub fn noun_forms() -> Vec<(String, &'static str)> {
    let mut forms: Vec<(String, &'static str)> = Vec::new();
    for c in CATEGORIES {
        forms.push((c.to_string(), c));
        forms.push((plural(c), c));
    }
    for (a, c) in ALIASES {
        forms.push((a.to_string(), c));
        if a != "people" && a != "persons" && a != "men" && a != "women" {
            forms.push((plural(a), c));
        }
    }
    forms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    forms.dedup();
    forms
}
