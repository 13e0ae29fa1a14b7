use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("InvalidAssignment: {0}")]
pub struct ParseAssignmentError(pub String);

/// A partial map from variable name to state label, written `A=a,B=b`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(BTreeMap<String, String>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: &str, state: &str) -> Self {
        self.insert(var, state);
        self
    }

    pub fn insert(&mut self, var: &str, state: &str) -> Option<String> {
        self.0.insert(var.to_string(), state.to_string())
    }

    pub fn get(&self, var: &str) -> Option<&str> {
        self.0.get(var).map(String::as_str)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// First variable shared with `other`, if any.
    pub fn overlap(&self, other: &Assignment) -> Option<&str> {
        self.vars().find(|v| other.contains(v))
    }
}

impl FromStr for Assignment {
    type Err = ParseAssignmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Assignment::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| ParseAssignmentError(format!("expected VAR=STATE, got {part:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ParseAssignmentError(format!("empty side in {part:?}")));
            }
            if out.insert(k, v).is_some() {
                return Err(ParseAssignmentError(format!("{k} assigned twice")));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut a = Assignment::new();
        for (k, v) in iter {
            a.insert(k, v);
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let a: Assignment = "T=A, R=1".parse().unwrap();
        assert_eq!(a.get("T"), Some("A"));
        assert_eq!(a.to_string(), "R=1,T=A");
        assert!("".parse::<Assignment>().unwrap().is_empty());
        assert!("T".parse::<Assignment>().is_err());
        assert!("T=A,T=B".parse::<Assignment>().is_err());
        assert!("=A".parse::<Assignment>().is_err());
    }
}
