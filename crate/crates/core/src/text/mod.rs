//! Tokenization, weighted inverted index, autocomplete and related-term
//! suggestion.

mod index;
mod tokenize;
mod weights;

pub use index::{
    entry_attribute, IndexedAttribute, MatchedAttribute, Query, RelatedTerm, SearchError,
    SearchIndex, SearchResult,
};
pub use tokenize::{is_stop_word, normalize, normalize_phrase, tokenize, word_starts, STOP_WORDS};
pub use weights::{AttributeKind, AttributeWeightTable, Score, Weight, WeightOutOfRange, MAX_WEIGHT};
