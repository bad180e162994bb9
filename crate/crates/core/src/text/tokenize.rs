use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Italian articles, articulated prepositions, prepositions and
/// conjunctions. Sorted; looked up by binary search.
///
/// `non` and `senza` are not stop words: "senza menzione di coma" has to
/// stay searchable.
pub const STOP_WORDS: &[&str] = &[
    "a", "ad", "agli", "ai", "al", "all", "alla", "alle", "allo", "anche", "che", "coi", "col", "con", "d", "da", "dagli",
    "dai", "dal", "dall", "dalla", "dalle", "dallo", "degli", "dei", "del", "dell", "della", "delle", "dello", "di",
    "e", "ed", "fra", "gli", "i", "il", "in", "l", "la", "le", "lo", "ma", "ne", "negli", "nei", "nel", "nell",
    "nella", "nelle", "nello", "o", "od", "per", "su", "sugli", "sui", "sul", "sull", "sulla", "sulle", "sullo",
    "tra", "un", "una", "uno",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Lowercase and strip diacritics: `Obesità` -> `obesita`.
pub fn normalize(text: &str) -> String {
    text.to_lowercase().nfd().filter(|c| !is_combining_mark(*c)).collect()
}

/// Lowercase, accent-folded tokens split on every non-alphanumeric
/// character, stop words removed.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !is_stop_word(t))
        .map(str::to_string)
        .collect()
}

/// Normalized form used for autocomplete: [`normalize`] plus trimmed,
/// single-spaced whitespace.
pub fn normalize_phrase(text: &str) -> String {
    normalize(text).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte offsets where a word starts (alphanumeric char preceded by start of
/// text or a non-alphanumeric char).
pub fn word_starts(normalized: &str) -> impl Iterator<Item = usize> + '_ {
    let mut prev_alnum = false;
    normalized.char_indices().filter_map(move |(i, c)| {
        let alnum = c.is_alphanumeric();
        let start = alnum && !prev_alnum;
        prev_alnum = alnum;
        start.then_some(i)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stop_words_sorted() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn plain_title() {
        assert_eq!(tokenize("Diabete mellito neonatale"), vec!["diabete", "mellito", "neonatale"]);
    }

    #[test]
    fn drops_articulated_preposition() {
        assert_eq!(
            tokenize("Anomalie cutanee del pigmento, congenite"),
            vec!["anomalie", "cutanee", "pigmento", "congenite"]
        );
    }

    #[test]
    fn empty_and_blank() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn hyphens_split_and_accents_fold() {
        assert_eq!(tokenize("diabete-nanismo-obesità"), vec!["diabete", "nanismo", "obesita"]);
        assert_eq!(tokenize("perché"), tokenize("PERCHE"));
        assert_eq!(tokenize("Codificare per prima l'eventuale"), vec!["codificare", "prima", "eventuale"]);
        assert_eq!(tokenize("Biopsia [endoscopica] del retto"), vec!["biopsia", "endoscopica", "retto"]);
    }

    #[test]
    fn word_start_offsets() {
        let s = normalize_phrase("Pre-diabete  tipo II");
        assert_eq!(s, "pre-diabete tipo ii");
        assert_eq!(word_starts(&s).collect::<Vec<_>>(), vec![0, 4, 12, 17]);
    }

    proptest! {
        #[test]
        fn tokens_are_normalized_and_not_stop_words(s in "\\PC{0,40}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(!is_stop_word(&t));
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert_eq!(normalize(&t), t.clone());
            }
        }

        #[test]
        fn tokenize_is_deterministic(s in "[a-zA-Zàèéìòù ,.'-]{0,60}") {
            prop_assert_eq!(tokenize(&s), tokenize(&s));
        }
    }
}
