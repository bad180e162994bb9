use std::collections::HashMap;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use super::tokenize::{normalize_phrase, tokenize, word_starts};
use super::weights::{AttributeKind, AttributeWeightTable, Score, Weight};
use crate::kb::{EntrySource, GlossaryKind, KnowledgeBase, Section};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("limit must be positive")]
    ZeroLimit,
}

/// Tokenized search request. Terms are deduplicated, first occurrence wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub terms: Vec<String>,
    pub section: Section,
    pub limit: usize,
}

impl Query {
    pub fn new(text: &str, section: Section, limit: usize) -> Self {
        Self::from_terms(tokenize(text), section, limit)
    }

    pub fn from_terms(terms: Vec<String>, section: Section, limit: usize) -> Self {
        let mut unique: Vec<String> = Vec::with_capacity(terms.len());
        for t in terms {
            if !unique.contains(&t) {
                unique.push(t);
            }
        }
        Query {
            terms: unique,
            section,
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedAttribute {
    pub attribute: AttributeKind,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchResult {
    pub code: String,
    pub title: String,
    pub score: Score,
    pub matched_attributes: Vec<MatchedAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelatedTerm {
    pub token: String,
    pub occurrence_count: usize,
}

/// A weighted searchable text attached to one class.
#[derive(Debug, Clone)]
pub struct IndexedAttribute {
    pub kind: AttributeKind,
    pub weight: Weight,
    class: u32,
    /// Range into [`SearchIndex::occurrences`].
    tokens: Range<u32>,
}

#[derive(Debug, Clone)]
struct IndexedClass {
    code: String,
    /// Position of `code` in the section's sorted code list.
    code_rank: u32,
    title: String,
    attributes: Range<u32>,
    /// Range into [`SearchIndex::related_occurrences`].
    related: Range<u32>,
}

#[derive(Debug, Clone)]
struct Suggestion {
    text: String,
    normalized: String,
    weight: Weight,
}

/// Suggestion strings plus every (suggestion, word offset) pair sorted by
/// the text from that offset on, so a prefix lookup is a binary search.
#[derive(Debug, Clone, Default)]
struct SuggestionTable {
    entries: Vec<Suggestion>,
    starts: Vec<(u32, u32)>,
}

impl SuggestionTable {
    fn suffix(&self, (entry, offset): (u32, u32)) -> &str {
        &self.entries[entry as usize].normalized[offset as usize..]
    }

    fn build(entries: Vec<Suggestion>) -> Self {
        let mut table = SuggestionTable {
            entries,
            starts: Vec::new(),
        };
        for (i, e) in table.entries.iter().enumerate() {
            table.starts.extend(word_starts(&e.normalized).map(|off| (i as u32, off as u32)));
        }
        let mut starts = std::mem::take(&mut table.starts);
        starts.sort_unstable_by(|a, b| table.suffix(*a).cmp(table.suffix(*b)).then(a.cmp(b)));
        table.starts = starts;
        table
    }

    fn lookup(&self, prefix: &str, limit: usize) -> Vec<String> {
        let first = self.starts.partition_point(|s| self.suffix(*s) < prefix);
        let mut hits: Vec<u32> = self.starts[first..]
            .iter()
            .take_while(|s| self.suffix(**s).starts_with(prefix))
            .map(|(entry, _)| *entry)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits.sort_by(|a, b| {
            let (a, b) = (&self.entries[*a as usize], &self.entries[*b as usize]);
            b.weight
                .cmp(&a.weight)
                .then_with(|| a.normalized.cmp(&b.normalized))
                .then_with(|| a.text.cmp(&b.text))
        });
        hits.truncate(limit);
        hits.into_iter().map(|i| self.entries[i as usize].text.clone()).collect()
    }
}

/// Weighted inverted index over every attribute of every class.
///
/// Attributes are stored grouped by class, so the attribute ids matched by
/// a query arrive already clustered per class and in a stable order.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    weights: AttributeWeightTable,
    vocabulary: HashMap<String, u32>,
    tokens: Vec<String>,
    /// Position of each token in alphabetical order.
    token_rank: Vec<u32>,
    /// Token ids of every attribute, back to back in attribute order.
    occurrences: Vec<u32>,
    /// Per class, the token ids of the attributes that feed related terms.
    related_occurrences: Vec<u32>,
    classes: Vec<IndexedClass>,
    class_by_code: [HashMap<String, u32>; 2],
    attributes: Vec<IndexedAttribute>,
    postings: [HashMap<u32, Vec<u32>>; 2],
    suggestions: [SuggestionTable; 2],
}

fn glossary_attribute(kind: GlossaryKind) -> AttributeKind {
    match kind {
        GlossaryKind::Physicians => AttributeKind::GlossaryPhysicians,
        GlossaryKind::RareDiseases => AttributeKind::GlossaryRareDiseases,
        GlossaryKind::EmergencySei => AttributeKind::GlossaryEmergency,
        GlossaryKind::Mesh => AttributeKind::GlossaryMesh,
        GlossaryKind::Other => AttributeKind::GlossaryOther,
    }
}

pub fn entry_attribute(source: EntrySource, indentation: u8) -> AttributeKind {
    match (source, indentation) {
        (EntrySource::AlphabeticalIndex, 0) => AttributeKind::AlphabeticalEntry,
        (EntrySource::AlphabeticalIndex, _) => AttributeKind::AlphabeticalIndentation,
        (EntrySource::NeoplasmTable, 0) => AttributeKind::NeoplasmEntry,
        (EntrySource::NeoplasmTable, _) => AttributeKind::NeoplasmIndentation,
    }
}

/// Every (kind, text) attribute of every class of `kb`, grouped by class in
/// KB order. Entry and glossary terms follow the class's own attributes in
/// file order; terms whose target is unknown are skipped.
pub(crate) fn class_attributes(kb: &KnowledgeBase) -> Vec<(Section, &str, Vec<(AttributeKind, &str)>)> {
    let mut external: HashMap<(Section, &str), Vec<(AttributeKind, &str)>> = HashMap::new();
    for term in kb.entry_terms() {
        if let Some(section) = kb.section_of(&term.target_code) {
            external
                .entry((section, term.target_code.as_str()))
                .or_default()
                .push((entry_attribute(term.source, term.indentation), term.text.as_str()));
        }
    }
    for term in kb.glossary_terms() {
        if let Some(section) = kb.section_of(&term.target_code) {
            external
                .entry((section, term.target_code.as_str()))
                .or_default()
                .push((glossary_attribute(term.glossary), term.text.as_str()));
        }
    }

    let mut out = Vec::new();
    let mut seen: [std::collections::HashSet<&str>; 2] = Default::default();
    for node in kb.nodes() {
        if !seen[node.section.slot()].insert(node.code.as_str()) {
            continue;
        }
        let mut attrs = vec![(AttributeKind::SystematicTitle, node.title.as_str())];
        attrs.extend(node.additional_title_terms.iter().map(|t| (AttributeKind::AdditionalTitle, t.as_str())));
        attrs.extend(node.inclusions.iter().map(|t| (AttributeKind::Inclusion, t.as_str())));
        attrs.extend(node.exclusions.iter().map(|e| (AttributeKind::Exclusion, e.text.as_str())));
        attrs.extend(node.notes.iter().map(|n| (AttributeKind::Note, n.text.as_str())));
        if let Some(extra) = external.remove(&(node.section, node.code.as_str())) {
            attrs.extend(extra);
        }
        out.push((node.section, node.code.as_str(), attrs));
    }
    out
}

impl SearchIndex {
    pub fn build(kb: &KnowledgeBase, weights: AttributeWeightTable) -> Self {
        let mut index = SearchIndex {
            weights,
            vocabulary: HashMap::new(),
            tokens: Vec::new(),
            token_rank: Vec::new(),
            occurrences: Vec::new(),
            related_occurrences: Vec::new(),
            classes: Vec::new(),
            class_by_code: Default::default(),
            attributes: Vec::new(),
            postings: Default::default(),
            suggestions: Default::default(),
        };
        let mut suggestions: [Vec<Suggestion>; 2] = Default::default();
        let mut suggestion_slot: [HashMap<String, usize>; 2] = Default::default();

        for (section, code, attrs) in class_attributes(kb) {
            let class_id = index.classes.len() as u32;
            let first = index.attributes.len() as u32;
            let related_first = index.related_occurrences.len() as u32;
            for (kind, text) in attrs {
                let weight = index.weights.get(kind);
                let start = index.occurrences.len() as u32;
                for t in tokenize(text) {
                    let id = index.intern(t);
                    index.occurrences.push(id);
                }
                let tokens = start..index.occurrences.len() as u32;
                if kind.feeds_related_terms() {
                    let (all, related) = (&index.occurrences, &mut index.related_occurrences);
                    related.extend_from_slice(&all[start as usize..]);
                }
                let attr_id = index.attributes.len() as u32;
                let mut distinct = index.occurrences[start as usize..].to_vec();
                distinct.sort_unstable();
                distinct.dedup();
                for tok in distinct {
                    index.postings[section.slot()].entry(tok).or_default().push(attr_id);
                }
                index.attributes.push(IndexedAttribute {
                    kind,
                    weight,
                    class: class_id,
                    tokens,
                });

                if kind.is_suggestion_source() {
                    let slot = section.slot();
                    match suggestion_slot[slot].get(text) {
                        Some(&i) => {
                            let s: &mut Suggestion = &mut suggestions[slot][i];
                            s.weight = s.weight.max(weight);
                        }
                        None => {
                            suggestion_slot[slot].insert(text.to_string(), suggestions[slot].len());
                            suggestions[slot].push(Suggestion {
                                text: text.to_string(),
                                normalized: normalize_phrase(text),
                                weight,
                            });
                        }
                    }
                }
            }
            let node = kb.get(section, code).expect("class_attributes yields known codes");
            index.class_by_code[section.slot()].insert(code.to_string(), class_id);
            index.classes.push(IndexedClass {
                code: code.to_string(),
                code_rank: 0,
                title: node.title.clone(),
                attributes: first..index.attributes.len() as u32,
                related: related_first..index.related_occurrences.len() as u32,
            });
        }
        let mut by_code: Vec<u32> = (0..index.classes.len() as u32).collect();
        by_code.sort_by(|a, b| index.classes[*a as usize].code.cmp(&index.classes[*b as usize].code));
        for (rank, class) in by_code.into_iter().enumerate() {
            index.classes[class as usize].code_rank = rank as u32;
        }
        let mut alphabetical: Vec<u32> = (0..index.tokens.len() as u32).collect();
        alphabetical.sort_by(|a, b| index.tokens[*a as usize].cmp(&index.tokens[*b as usize]));
        index.token_rank = vec![0; alphabetical.len()];
        for (rank, tok) in alphabetical.into_iter().enumerate() {
            index.token_rank[tok as usize] = rank as u32;
        }
        let [d, p] = suggestions;
        index.suggestions = [SuggestionTable::build(d), SuggestionTable::build(p)];
        index
    }

    fn attribute_tokens(&self, attr: &IndexedAttribute) -> &[u32] {
        &self.occurrences[attr.tokens.start as usize..attr.tokens.end as usize]
    }

    fn intern(&mut self, token: String) -> u32 {
        if let Some(&id) = self.vocabulary.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.clone());
        self.vocabulary.insert(token, id);
        id
    }

    pub fn weights(&self) -> &AttributeWeightTable {
        &self.weights
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Codes whose attributes contain `token`, ascending and deduplicated.
    pub fn posting_codes(&self, section: Section, token: &str) -> Vec<String> {
        let Some(id) = self.vocabulary.get(token) else {
            return Vec::new();
        };
        let mut codes: Vec<String> = self.postings[section.slot()]
            .get(id)
            .into_iter()
            .flatten()
            .map(|a| self.classes[self.attributes[*a as usize].class as usize].code.clone())
            .collect();
        codes.sort();
        codes.dedup();
        codes
    }

    /// Attributes of `code` containing `token`, as (kind, weight).
    pub fn attributes_with_token(&self, section: Section, code: &str, token: &str) -> Vec<MatchedAttribute> {
        let (Some(class), Some(tok)) = (self.class_by_code[section.slot()].get(code), self.vocabulary.get(token)) else {
            return Vec::new();
        };
        let range = self.classes[*class as usize].attributes.clone();
        self.attributes[range.start as usize..range.end as usize]
            .iter()
            .filter(|a| self.attribute_tokens(a).contains(tok))
            .map(|a| MatchedAttribute {
                attribute: a.kind,
                weight: a.weight,
            })
            .collect()
    }

    /// Ranked search, truncated to `query.limit`.
    pub fn search(&self, query: &Query) -> Result<Vec<SearchResult>, SearchError> {
        if query.limit == 0 {
            return Err(SearchError::ZeroLimit);
        }
        let (ranked, matched) = self.rank(query.section, &query.terms)?;
        Ok(self.materialize(&ranked[..ranked.len().min(query.limit)], &matched))
    }

    /// Every class with at least one attribute containing all `terms`,
    /// scored by the sum of the weights of those attributes and sorted by
    /// (score desc, code asc).
    pub fn search_all(&self, section: Section, terms: &[String]) -> Result<Vec<SearchResult>, SearchError> {
        let (ranked, matched) = self.rank(section, terms)?;
        Ok(self.materialize(&ranked, &matched))
    }

    /// [`search`](Self::search) plus the first `related_limit` related
    /// terms, counted over the whole result set, not just the returned page.
    pub fn search_with_related(
        &self,
        query: &Query,
        related_limit: usize,
    ) -> Result<(Vec<SearchResult>, Vec<RelatedTerm>), SearchError> {
        if query.limit == 0 {
            return Err(SearchError::ZeroLimit);
        }
        let (ranked, matched) = self.rank(query.section, &query.terms)?;
        let related = self.count_related(&query.terms, ranked.iter().map(|r| r.class), related_limit);
        Ok((self.materialize(&ranked[..ranked.len().min(query.limit)], &matched), related))
    }

    /// Matching classes in result order; `matched` holds the matching
    /// attribute ids, each class owning a contiguous run of it.
    fn rank(&self, section: Section, terms: &[String]) -> Result<(Vec<Ranked>, Vec<u32>), SearchError> {
        if terms.is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut lists: Vec<&[u32]> = Vec::with_capacity(terms.len());
        for term in terms {
            let posting = self
                .vocabulary
                .get(term)
                .and_then(|id| self.postings[section.slot()].get(id));
            match posting {
                Some(list) => lists.push(list),
                None => return Ok((Vec::new(), Vec::new())),
            }
        }
        lists.sort_by_key(|l| l.len());
        let mut matched: Vec<u32> = lists[0].to_vec();
        for other in &lists[1..] {
            matched.retain(|a| other.binary_search(a).is_ok());
            if matched.is_empty() {
                return Ok((Vec::new(), Vec::new()));
            }
        }

        let mut ranked: Vec<Ranked> = Vec::new();
        for (i, &attr_id) in matched.iter().enumerate() {
            let attr = &self.attributes[attr_id as usize];
            match ranked.last_mut() {
                Some(r) if r.class == attr.class => {
                    r.score += attr.weight;
                    r.matched.end = i as u32 + 1;
                }
                _ => {
                    let mut score = Score::default();
                    score += attr.weight;
                    ranked.push(Ranked {
                        class: attr.class,
                        code_rank: self.classes[attr.class as usize].code_rank,
                        score,
                        matched: i as u32..i as u32 + 1,
                    });
                }
            }
        }
        ranked.sort_unstable_by_key(|r| (std::cmp::Reverse(r.score), r.code_rank));
        Ok((ranked, matched))
    }

    fn materialize(&self, ranked: &[Ranked], matched: &[u32]) -> Vec<SearchResult> {
        ranked
            .iter()
            .map(|r| {
                let class = &self.classes[r.class as usize];
                SearchResult {
                    code: class.code.clone(),
                    title: class.title.clone(),
                    score: r.score,
                    matched_attributes: matched[r.matched.start as usize..r.matched.end as usize]
                        .iter()
                        .map(|a| {
                            let attr = &self.attributes[*a as usize];
                            MatchedAttribute {
                                attribute: attr.kind,
                                weight: attr.weight,
                            }
                        })
                        .collect(),
                }
            })
            .collect()
    }

    /// Suggestion strings (titles, entry terms, glossary terms) with a word
    /// starting with `prefix`, ordered by (attribute weight desc, text asc).
    pub fn autocomplete(&self, prefix: &str, section: Section, limit: usize) -> Vec<String> {
        let prefix = normalize_phrase(prefix);
        if prefix.is_empty() || limit == 0 {
            return Vec::new();
        }
        self.suggestions[section.slot()].lookup(&prefix, limit)
    }

    /// Token co-occurrence counts over the result classes' titles,
    /// additional titles, inclusions and alphabetical-index entry terms.
    /// Query tokens are dropped; sorted by (count desc, token asc).
    pub fn related_terms(&self, query: &Query, results: &[SearchResult]) -> Vec<RelatedTerm> {
        let slot = query.section.slot();
        let classes = results
            .iter()
            .filter_map(|r| self.class_by_code[slot].get(&r.code).copied());
        self.count_related(&query.terms, classes, usize::MAX)
    }

    fn count_related(&self, terms: &[String], classes: impl Iterator<Item = u32>, limit: usize) -> Vec<RelatedTerm> {
        let mut counts = vec![0u32; self.tokens.len()];
        // id order walks the token arena front to back
        let mut classes: Vec<u32> = classes.collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let range = self.classes[class as usize].related.clone();
            for &tok in &self.related_occurrences[range.start as usize..range.end as usize] {
                counts[tok as usize] += 1;
            }
        }
        for t in terms {
            if let Some(&id) = self.vocabulary.get(t) {
                counts[id as usize] = 0;
            }
        }
        let mut found: Vec<u32> = (0..counts.len() as u32).filter(|&t| counts[t as usize] > 0).collect();
        let key = |tok: &u32| (std::cmp::Reverse(counts[*tok as usize]), self.token_rank[*tok as usize]);
        if limit < found.len() {
            found.select_nth_unstable_by_key(limit, key);
            found.truncate(limit);
        }
        found.sort_unstable_by_key(key);
        found
            .into_iter()
            .map(|tok| RelatedTerm {
                token: self.tokens[tok as usize].clone(),
                occurrence_count: counts[tok as usize] as usize,
            })
            .collect()
    }
}

/// A matching class before its strings are copied out.
#[derive(Debug, Clone)]
struct Ranked {
    class: u32,
    code_rank: u32,
    score: Score,
    matched: Range<u32>,
}
