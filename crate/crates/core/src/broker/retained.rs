use std::collections::BTreeMap;

use crate::mqtt::{matches_unchecked, Publish};

/// Last retained message per topic.
#[derive(Debug, Clone, Default)]
pub struct RetainedStore {
    messages: BTreeMap<String, Publish>,
}

impl RetainedStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store `publish` as the retained message for its topic. An empty
    /// payload clears the topic instead.
    pub fn update(&mut self, publish: &Publish) {
        if publish.payload.is_empty() {
            self.messages.remove(&publish.topic);
        } else {
            self.messages.insert(publish.topic.clone(), publish.clone());
        }
    }

    pub fn get(&self, topic: &str) -> Option<&Publish> {
        self.messages.get(topic)
    }

    /// Retained messages whose topic matches a (validated) filter, in topic
    /// order.
    pub fn matching<'a>(&'a self, filter: &'a str) -> impl Iterator<Item = &'a Publish> + 'a {
        self.messages
            .values()
            .filter(move |p| matches_unchecked(filter, &p.topic))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Publish> {
        self.messages.values()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_message_per_topic_and_empty_payload_deletes() {
        let mut store = RetainedStore::new();
        store.update(&Publish::qos0("p/slot/1/status", "1", true));
        store.update(&Publish::qos0("p/slot/1/status", "0", true));
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("p/slot/1/status").unwrap().payload, b"0");
        store.update(&Publish::qos0("p/slot/1/status", "", true));
        assert!(store.is_empty());
    }

    #[test]
    fn matching_uses_wildcards() {
        let mut store = RetainedStore::new();
        for t in ["p/slot/1/status", "p/slot/2/status", "p/summary"] {
            store.update(&Publish::qos0(t, "x", true));
        }
        assert_eq!(store.matching("p/slot/+/status").count(), 2);
        assert_eq!(store.matching("#").count(), 3);
    }
}
