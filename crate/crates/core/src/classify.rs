//! Drug-post detection, class attribution and cohort construction.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cohort, Corpus, Post, Role, UserRecord};
use crate::lexicon::{DrugClass, Lexicon, Term};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationConfig {
    /// Matched active terms needed for a drug-positive post.
    pub min_drug_tags: usize,
    /// Selfie-tagged posts needed to confirm a candidate user.
    pub min_selfie_posts: usize,
    /// Tag used to reach the comparison population.
    pub nondrug_probe_tag: String,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            min_drug_tags: 2,
            min_selfie_posts: 2,
            nondrug_probe_tag: "instapic".into(),
        }
    }
}

impl ClassificationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_drug_tags == 0 {
            return Err("min_drug_tags must be at least 1".into());
        }
        if self.min_selfie_posts == 0 {
            return Err("min_selfie_posts must be at least 1".into());
        }
        if self.nondrug_probe_tag.is_empty() {
            return Err("nondrug_probe_tag must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugVerdict<'a> {
    pub is_drug: bool,
    pub matched: Vec<&'a Term>,
}

pub fn is_drug_post<'a>(post: &Post, lexicon: &'a Lexicon, config: &ClassificationConfig) -> DrugVerdict<'a> {
    let matched = lexicon.match_terms(&post.hashtags);
    DrugVerdict {
        is_drug: matched.len() >= config.min_drug_tags,
        matched,
    }
}

/// Audit record for one post: matched terms and the classes they imply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAttribution {
    pub media_id: String,
    pub classes: BTreeSet<DrugClass>,
    pub matched_terms: Vec<String>,
    /// Terms matched but none of them carries a drug class.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unattributed: bool,
}

/// Classes of the categorized terms a post matches. A post can carry several.
pub fn attribute_classes(post: &Post, lexicon: &Lexicon) -> ClassAttribution {
    let matched = lexicon.match_terms(&post.hashtags);
    let classes: BTreeSet<DrugClass> = matched.iter().filter_map(|t| t.category.drug_class()).collect();
    ClassAttribution {
        media_id: post.media_id.clone(),
        unattributed: classes.is_empty() && !matched.is_empty(),
        matched_terms: matched.into_iter().map(|t| t.text.clone()).collect(),
        classes,
    }
}

/// Drug-positive posts of a corpus with their attributions, in corpus order.
#[derive(Debug, Clone)]
pub struct Classification<'a> {
    pub drug_posts: Vec<&'a Post>,
    pub attributions: Vec<ClassAttribution>,
}

impl<'a> Classification<'a> {
    pub fn unattributed(&self) -> usize {
        self.attributions.iter().filter(|a| a.unattributed).count()
    }

    /// Posts attributed to `class` (a multi-class post appears under each).
    pub fn posts_of_class(&self, class: DrugClass) -> Vec<&'a Post> {
        self.drug_posts
            .iter()
            .zip(&self.attributions)
            .filter(|(_, a)| a.classes.contains(&class))
            .map(|(p, _)| *p)
            .collect()
    }

    /// Posts counted once per attributed class.
    pub fn class_counts(&self) -> BTreeMap<DrugClass, u64> {
        let mut counts: BTreeMap<DrugClass, u64> = DrugClass::ALL.iter().map(|c| (*c, 0)).collect();
        for a in &self.attributions {
            for c in &a.classes {
                *counts.get_mut(c).expect("all classes present") += 1;
            }
        }
        counts
    }
}

pub fn classify_posts<'a>(corpus: &'a Corpus, lexicon: &Lexicon, config: &ClassificationConfig) -> Classification<'a> {
    let hits: Vec<(&Post, ClassAttribution)> = corpus
        .posts()
        .par_iter()
        .filter_map(|p| {
            let attr = attribute_classes(p, lexicon);
            (attr.matched_terms.len() >= config.min_drug_tags).then_some((p, attr))
        })
        .collect();
    let (drug_posts, attributions) = hits.into_iter().unzip();
    Classification {
        drug_posts,
        attributions,
    }
}

fn user_record(user_id: &str, posts: &[&Post], cohort: Cohort) -> UserRecord {
    UserRecord {
        user_id: user_id.to_string(),
        username: posts.first().map(|p| p.username.clone()).unwrap_or_default(),
        posts: posts.iter().map(|p| p.media_id.clone()).collect(),
        cohort,
        role: Role::Unknown,
    }
}

/// One record per user owning at least one drug-positive post, by user id.
pub fn extract_candidate_users(
    corpus: &Corpus,
    lexicon: &Lexicon,
    config: &ClassificationConfig,
) -> Vec<UserRecord> {
    corpus
        .posts_by_user()
        .into_iter()
        .filter(|(_, posts)| posts.iter().any(|p| is_drug_post(p, lexicon, config).is_drug))
        .map(|(uid, posts)| user_record(uid, &posts, Cohort::Unlabeled))
        .collect()
}

/// Keeps candidates with at least `min_selfie_posts` selfie-tagged posts.
/// Survivors are marked as the drug cohort.
pub fn selfie_filter(
    users: &[UserRecord],
    corpus: &Corpus,
    lexicon: &Lexicon,
    config: &ClassificationConfig,
) -> Vec<UserRecord> {
    users
        .iter()
        .filter(|u| selfie_post_count(u, corpus, lexicon) >= config.min_selfie_posts)
        .map(|u| UserRecord {
            cohort: Cohort::Drug,
            ..u.clone()
        })
        .collect()
}

fn selfie_post_count(user: &UserRecord, corpus: &Corpus, lexicon: &Lexicon) -> usize {
    user.posts
        .iter()
        .filter_map(|id| corpus.get(id))
        .filter(|p| p.hashtags.iter().any(|t| lexicon.is_selfie_tag(t)))
        .count()
}

/// Users reached through the probe tag whose whole history matches no
/// active term at all. A single match disqualifies.
pub fn build_nondrug_cohort(corpus: &Corpus, lexicon: &Lexicon, config: &ClassificationConfig) -> Vec<UserRecord> {
    corpus
        .posts_by_user()
        .into_iter()
        .filter(|(_, posts)| posts.iter().any(|p| p.has_tag(&config.nondrug_probe_tag)))
        .filter(|(_, posts)| posts.iter().all(|p| lexicon.match_terms(&p.hashtags).is_empty()))
        .map(|(uid, posts)| user_record(uid, &posts, Cohort::Nondrug))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, user: &str, tags: &[&str]) -> Post {
        Post {
            media_id: id.into(),
            user_id: user.into(),
            username: format!("name_{user}"),
            created_at: 1_458_000_000,
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            caption: String::new(),
            geo: None,
            media_ref: None,
        }
    }

    fn corpus(posts: Vec<Post>) -> Corpus {
        Corpus::from_posts(posts).0
    }

    #[test]
    fn drug_post_threshold() {
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let v = is_drug_post(&post("a", "u", &["kush", "420", "sunset"]), &lex, &cfg);
        assert!(v.is_drug);
        let texts: Vec<_> = v.matched.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["420", "kush"]);
        assert!(!is_drug_post(&post("b", "u", &["kush"]), &lex, &cfg).is_drug);
        let strict = ClassificationConfig {
            min_drug_tags: 3,
            ..cfg
        };
        assert!(!is_drug_post(&post("a", "u", &["kush", "420", "sunset"]), &lex, &strict).is_drug);
    }

    #[test]
    fn class_attribution_examples() {
        let lex = Lexicon::shipped();
        let a = attribute_classes(&post("a", "u", &["sizzurp", "doublecup"]), &lex);
        assert_eq!(a.classes, BTreeSet::from([DrugClass::Syrup]));
        let b = attribute_classes(&post("b", "u", &["kush", "xanaxbars"]), &lex);
        assert_eq!(b.classes, BTreeSet::from([DrugClass::Weed, DrugClass::Pills]));
        let c = attribute_classes(&post("c", "u", &["420", "smoke"]), &lex);
        assert!(c.classes.is_empty());
        assert!(c.unattributed);
        let d = attribute_classes(&post("d", "u", &["sunset"]), &lex);
        assert!(!d.unattributed);
    }

    #[test]
    fn candidates_are_unique_users() {
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let c = corpus(vec![
            post("a", "u1", &["kush", "weed"]),
            post("b", "u1", &["sizzurp", "lean", "codeine"]),
            post("c", "u2", &["kush"]),
        ]);
        let users = extract_candidate_users(&c, &lex, &cfg);
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].user_id, "u1");
        assert_eq!(users[0].posts, vec!["a", "b"]);
        assert!(extract_candidate_users(&Corpus::default(), &lex, &cfg).is_empty());
    }

    #[test]
    fn selfie_threshold() {
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let c = corpus(vec![
            post("a", "u1", &["kush", "weed"]),
            post("b", "u1", &["selfie"]),
            post("c", "u2", &["kush", "weed"]),
            post("d", "u2", &["weedselfie", "selfy"]),
            post("e", "u2", &["selfportrait"]),
        ]);
        let cands = extract_candidate_users(&c, &lex, &cfg);
        let confirmed = selfie_filter(&cands, &c, &lex, &cfg);
        assert_eq!(confirmed.len(), 1);
        assert_eq!(confirmed[0].user_id, "u2");
        assert_eq!(confirmed[0].cohort, Cohort::Drug);
    }

    #[test]
    fn nondrug_cohort_requires_zero_matches() {
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let c = corpus(vec![
            post("a", "clean", &["instapic", "sunset"]),
            post("b", "clean", &["beach"]),
            post("c", "once", &["instapic"]),
            post("d", "once", &["kush"]),
            post("e", "unreached", &["sunset"]),
        ]);
        let users = build_nondrug_cohort(&c, &lex, &cfg);
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].user_id, "clean");
        assert_eq!(users[0].cohort, Cohort::Nondrug);
    }

    #[test]
    fn classify_posts_counts_multi_class_once_per_class() {
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let c = corpus(vec![
            post("a", "u", &["kush", "xanaxbars"]),
            post("b", "u", &["kush", "weed"]),
            post("c", "u", &["420", "smoke"]),
            post("d", "u", &["kush"]),
        ]);
        let cl = classify_posts(&c, &lex, &cfg);
        assert_eq!(cl.drug_posts.len(), 3);
        assert_eq!(cl.unattributed(), 1);
        let counts = cl.class_counts();
        assert_eq!(counts[&DrugClass::Weed], 2);
        assert_eq!(counts[&DrugClass::Pills], 1);
        assert_eq!(counts[&DrugClass::Syrup], 0);
        assert_eq!(cl.posts_of_class(DrugClass::Pills)[0].media_id, "a");
    }
}
