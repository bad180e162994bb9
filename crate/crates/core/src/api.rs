//! JSON response bodies shared by the HTTP service and the CLI's `--json`
//! output, so both serialize the same structures.

use serde::Serialize;

use crate::kb::{CodeDetails, KbError, KnowledgeBase, Section};
use crate::rules::{validate_selection, SelectionAlert};
use crate::text::{MatchedAttribute, Query, Score, SearchError, SearchIndex};

pub const DEFAULT_SEARCH_LIMIT: usize = 50;
pub const DEFAULT_AUTOCOMPLETE_LIMIT: usize = 10;
/// Related terms shown next to the results.
pub const RELATED_TERMS_SHOWN: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchBody {
    pub results: Vec<ResultBody>,
    pub related_terms: Vec<RelatedBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultBody {
    pub code: String,
    pub title: String,
    pub score: Score,
    pub matched: Vec<MatchedAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelatedBody {
    pub token: String,
    pub count: usize,
}

/// Ranked results (truncated to `limit`) and related terms counted over the
/// full result set.
pub fn search_body(index: &SearchIndex, section: Section, q: &str, limit: usize) -> Result<SearchBody, SearchError> {
    let query = Query::new(q, section, limit);
    if limit == 0 {
        return Err(SearchError::ZeroLimit);
    }
    let (results, related) = index.search_with_related(&query, RELATED_TERMS_SHOWN)?;
    Ok(SearchBody {
        results: results
            .into_iter()
            .map(|r| ResultBody {
                code: r.code,
                title: r.title,
                score: r.score,
                matched: r.matched_attributes,
            })
            .collect(),
        related_terms: related
            .into_iter()
            .map(|t| RelatedBody {
                token: t.token,
                count: t.occurrence_count,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeDetailsBody {
    #[serde(flatten)]
    pub details: CodeDetails,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alerts: Option<Vec<SelectionAlert>>,
}

/// Code details; with `selected`, also the selection alerts for the code.
pub fn code_details_body(
    kb: &KnowledgeBase,
    section: Section,
    code: &str,
    selected: Option<&[String]>,
) -> Result<CodeDetailsBody, KbError> {
    let details = kb.code_details(section, code)?;
    let alerts = match selected {
        Some(list) => Some(validate_selection(kb, section, code, list)?),
        None => None,
    };
    Ok(CodeDetailsBody { details, alerts })
}
