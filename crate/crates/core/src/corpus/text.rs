//! Orthography normalization, script filtering and emoji handling for
//! Perso-Arabic Central Kurdish text.

use unicode_normalization::UnicodeNormalization;

const TATWEEL: char = '\u{0640}';
const ZWJ: char = '\u{200D}';
const VARIATION_SELECTOR_16: char = '\u{FE0F}';

/// Letters that set Central Kurdish apart from Arabic and Persian orthography.
pub const DISTINCTIVE_LETTERS: [char; 10] = [
    '\u{0695}', // ڕ
    '\u{06B5}', // ڵ
    '\u{06CE}', // ێ
    '\u{06C6}', // ۆ
    '\u{06D5}', // ە
    '\u{06A4}', // ڤ
    '\u{06AF}', // گ
    '\u{0686}', // چ
    '\u{067E}', // پ
    '\u{0698}', // ژ
];

/// Code-point ranges treated as emoji bases.
pub const EMOJI_RANGES: [(u32, u32); 6] = [
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x2600, 0x27BF),
    (0x1FA70, 0x1FAFF),
];

fn map_letter(c: char) -> Option<char> {
    match c {
        '\u{0643}' => Some('\u{06A9}'),
        '\u{064A}' | '\u{0649}' => Some('\u{06CC}'),
        TATWEEL => None,
        '\u{0660}'..='\u{0669}' => char::from_digit(c as u32 - 0x0660, 10),
        '\u{06F0}'..='\u{06F9}' => char::from_digit(c as u32 - 0x06F0, 10),
        _ => Some(c),
    }
}

/// Normalizes orthography: NFC, Arabic kaf and yeh forms to their Kurdish
/// counterparts, tatweel removal, Arabic-Indic digits to ASCII, and all
/// whitespace runs collapsed to a single space with the ends trimmed.
///
/// ```
/// use kurdsent::corpus::normalize;
/// assert_eq!(normalize("a  b\t c"), "a b c");
/// assert_eq!(normalize("\u{0643}\u{0640}\u{0649}"), "\u{06A9}\u{06CC}");
/// ```
pub fn normalize(text: &str) -> String {
    let mapped: String = text.nfc().filter_map(map_letter).collect();
    // Mapping can leave a decomposable pair behind (e.g. yeh + hamza), so
    // recompose before collapsing whitespace.
    let mut out = String::with_capacity(mapped.len());
    for word in mapped.nfc().collect::<String>().split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// True for code points in the Arabic script blocks (including the
/// supplement, extended-A and both presentation-form blocks).
pub fn is_arabic_script(c: char) -> bool {
    matches!(c as u32,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF)
}

/// Keeps text that is predominantly Arabic-script (at least half of its
/// letters) and contains at least one distinctive Central Kurdish letter.
pub fn script_filter(text: &str) -> bool {
    let mut letters = 0usize;
    let mut arabic = 0usize;
    let mut distinctive = false;
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if is_arabic_script(c) {
            arabic += 1;
        }
        distinctive |= DISTINCTIVE_LETTERS.contains(&c);
    }
    letters > 0 && 2 * arabic >= letters && distinctive
}

/// One detected emoji sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiMatch {
    /// Byte offset of the sequence in the input.
    pub offset: usize,
    pub sequence: String,
}

impl EmojiMatch {
    pub fn end(&self) -> usize {
        self.offset + self.sequence.len()
    }
}

pub fn is_emoji_base(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Finds maximal emoji sequences. A sequence starts at an emoji base and
/// absorbs trailing U+FE0F selectors and ZWJ joins; two bases that merely
/// sit next to each other are reported as separate hits.
pub fn detect_emoji(text: &str) -> Vec<EmojiMatch> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut hits = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if !is_emoji_base(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        loop {
            match chars.get(j).map(|&(_, c)| c) {
                Some(VARIATION_SELECTOR_16) => j += 1,
                Some(ZWJ) => {
                    j += 1;
                    match chars.get(j) {
                        Some(&(_, next)) if is_emoji_base(next) => j += 1,
                        _ => break,
                    }
                }
                _ => break,
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(o, _)| o);
        hits.push(EmojiMatch {
            offset: start,
            sequence: text[start..end].to_string(),
        });
        i = j;
    }
    hits
}

pub fn has_emoji(text: &str) -> bool {
    text.chars().any(is_emoji_base)
}

/// Removes every emoji sequence, then collapses the space runs and the
/// leading/trailing spaces the removal leaves behind. Text without emoji is
/// returned unchanged.
pub fn strip_emoji(text: &str) -> String {
    let hits = detect_emoji(text);
    if hits.is_empty() {
        return text.to_string();
    }
    let mut removed = String::with_capacity(text.len());
    let mut cursor = 0;
    for hit in &hits {
        removed.push_str(&text[cursor..hit.offset]);
        cursor = hit.end();
    }
    removed.push_str(&text[cursor..]);

    let mut out = String::with_capacity(removed.len());
    let mut prev_space = true;
    for c in removed.chars() {
        if c == ' ' {
            if !prev_space {
                out.push(' ');
            }
            prev_space = true;
        } else {
            out.push(c);
            prev_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}
