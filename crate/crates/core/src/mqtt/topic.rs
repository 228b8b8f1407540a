//! Topic names, topic filters and wildcard matching.

use thiserror::Error;

const SEPARATOR: char = '/';
const SINGLE: &str = "+";
const MULTI: &str = "#";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic is longer than 65535 bytes")]
    TooLong,
    #[error("topic name {0:?} contains a wildcard")]
    WildcardInName(String),
    #[error("topic contains a NUL character")]
    Nul,
    #[error("filter {0:?} uses a wildcard inside a level")]
    BadWildcard(String),
    #[error("filter {0:?} has '#' before the last level")]
    HashNotLast(String),
}

fn common_checks(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > u16::MAX as usize {
        return Err(TopicError::TooLong);
    }
    if s.contains('\0') {
        return Err(TopicError::Nul);
    }
    Ok(())
}

/// Names are what publishers send to; they never contain wildcards.
pub fn validate_topic_name(topic: &str) -> Result<(), TopicError> {
    common_checks(topic)?;
    if topic.contains(['+', '#']) {
        return Err(TopicError::WildcardInName(topic.to_string()));
    }
    Ok(())
}

/// Filters may use `+` for one whole level and `#` as the whole last level.
pub fn validate_topic_filter(filter: &str) -> Result<(), TopicError> {
    common_checks(filter)?;
    let levels: Vec<&str> = filter.split(SEPARATOR).collect();
    for (i, level) in levels.iter().enumerate() {
        if *level == MULTI {
            if i + 1 != levels.len() {
                return Err(TopicError::HashNotLast(filter.to_string()));
            }
        } else if *level != SINGLE && level.contains(['+', '#']) {
            return Err(TopicError::BadWildcard(filter.to_string()));
        }
    }
    Ok(())
}

/// Level-wise match of `topic` against `filter`.
///
/// `+` matches exactly one level, `#` matches the rest of the topic
/// including its parent level (`a/#` matches `a`).
pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, TopicError> {
    validate_topic_filter(filter)?;
    validate_topic_name(topic)?;
    Ok(matches_unchecked(filter, topic))
}

pub(crate) fn matches_unchecked(filter: &str, topic: &str) -> bool {
    let mut f = filter.split(SEPARATOR);
    let mut t = topic.split(SEPARATOR);
    loop {
        match (f.next(), t.next()) {
            (Some(MULTI), _) => return true,
            (Some(SINGLE), Some(_)) => {}
            (Some(fl), Some(tl)) if fl == tl => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_examples() {
        assert!(topic_matches("parking/slot/+/status", "parking/slot/3/status").unwrap());
        assert!(topic_matches("parking/#", "parking/env/temperature").unwrap());
        assert!(!topic_matches("parking/slot/+", "parking/slot/3/status").unwrap());
    }

    #[test]
    fn hash_matches_parent_and_everything() {
        assert!(topic_matches("parking/#", "parking").unwrap());
        assert!(topic_matches("#", "a/b/c").unwrap());
        assert!(topic_matches("#", "/").unwrap());
        assert!(!topic_matches("parking/#", "other/x").unwrap());
    }

    #[test]
    fn plus_matches_empty_levels() {
        assert!(topic_matches("a/+/c", "a//c").unwrap());
        assert!(topic_matches("+/+", "/x").unwrap());
        assert!(!topic_matches("+", "a/b").unwrap());
    }

    #[test]
    fn exact_match() {
        assert!(topic_matches("a/b", "a/b").unwrap());
        assert!(!topic_matches("a/b", "a/b/c").unwrap());
        assert!(!topic_matches("a/b/c", "a/b").unwrap());
    }

    #[test]
    fn invalid_filters() {
        assert_eq!(
            validate_topic_filter("a/#/b"),
            Err(TopicError::HashNotLast("a/#/b".into()))
        );
        assert!(validate_topic_filter("a/b+").is_err());
        assert!(validate_topic_filter("a#").is_err());
        assert!(validate_topic_filter("").is_err());
        assert!(topic_matches("a/#/b", "a/x/b").is_err());
    }

    #[test]
    fn invalid_names() {
        assert!(validate_topic_name("a/+").is_err());
        assert!(validate_topic_name("a/#").is_err());
        assert!(validate_topic_name("").is_err());
        assert!(validate_topic_name("a\0b").is_err());
    }
}
