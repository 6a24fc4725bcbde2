use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ir::Name;
use crate::runtime::ProcessorId;

/// Where an alias expression starts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Root {
    /// A program variable, `Current` included.
    Var(Name),
    /// An abstract object, written `o<n>`.
    Label(u32),
    /// A formal or local of one activation, written `name@p.depth`.
    Frame { name: Name, processor: ProcessorId, depth: u32 },
}

impl fmt::Display for Root {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Root::Var(n) => f.write_str(n),
            Root::Label(n) => write!(f, "o{n}"),
            Root::Frame { name, processor, depth } => write!(f, "{name}@{}.{depth}", processor.0),
        }
    }
}

/// A root followed by attribute selectors. A widened expression stands for
/// its path and every extension of it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AliasExpr {
    pub root: Root,
    pub selectors: Vec<Name>,
    pub widened: bool,
}

impl AliasExpr {
    pub fn new(root: Root) -> Self {
        AliasExpr { root, selectors: Vec::new(), widened: false }
    }

    pub fn var(name: &str) -> Self {
        Self::new(Root::Var(name.into()))
    }

    pub fn label(n: u32) -> Self {
        Self::new(Root::Label(n))
    }

    pub fn dot(mut self, selector: &str) -> Self {
        self.selectors.push(selector.into());
        self
    }

    /// Number of selectors.
    pub fn depth(&self) -> usize {
        self.selectors.len()
    }

    pub fn same_path(&self, other: &AliasExpr) -> bool {
        self.root == other.root && self.selectors == other.selectors
    }

    /// `σ` with `self = prefix.σ`, comparing paths only.
    pub fn suffix_after(&self, prefix: &AliasExpr) -> Option<&[Name]> {
        (self.root == prefix.root && self.selectors.starts_with(&prefix.selectors))
            .then(|| &self.selectors[prefix.selectors.len()..])
    }

    pub fn has_prefix(&self, prefix: &AliasExpr) -> bool {
        self.suffix_after(prefix).is_some()
    }

    /// `self.σ`, truncated to `depth` selectors and widened when it does not
    /// fit. A widened expression absorbs any extension.
    pub fn extend(&self, suffix: &[Name], depth: usize) -> AliasExpr {
        if self.widened {
            return self.clone();
        }
        let mut e = self.clone();
        e.selectors.extend(suffix.iter().cloned());
        e.truncate(depth)
    }

    pub fn truncate(mut self, depth: usize) -> AliasExpr {
        if self.selectors.len() > depth {
            self.selectors.truncate(depth);
            self.widened = true;
        }
        self
    }

    pub fn widen(mut self) -> AliasExpr {
        self.widened = true;
        self
    }

    /// The expression without its last selector.
    pub fn parent(&self) -> Option<(AliasExpr, &Name)> {
        let (last, rest) = self.selectors.split_last()?;
        Some((AliasExpr { root: self.root.clone(), selectors: rest.to_vec(), widened: false }, last))
    }
}

/// Runs of a repeated selector print as `next^3`; widening appends `.*`.
impl fmt::Display for AliasExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        let mut i = 0;
        while i < self.selectors.len() {
            let s = &self.selectors[i];
            let run = self.selectors[i..].iter().take_while(|t| *t == s).count();
            if run > 1 {
                write!(f, ".{s}^{run}")?;
            } else {
                write!(f, ".{s}")?;
            }
            i += run;
        }
        if self.widened {
            f.write_str(".*")?;
        }
        Ok(())
    }
}

impl Serialize for AliasExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad alias expression `{text}`: {message}")]
pub struct ExprParseError {
    pub text: String,
    pub message: String,
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses the display notation with a variable root: `y`, `y.next.next`,
/// `y.next^2.val`, `y.next^3.*`.
impl FromStr for AliasExpr {
    type Err = ExprParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |message: &str| ExprParseError { text: text.to_string(), message: message.to_string() };
        let mut parts = text.trim().split('.');
        let root = parts.next().unwrap_or_default().trim();
        if !is_ident(root) {
            return Err(err("expected a variable name"));
        }
        let mut e = AliasExpr::var(root);
        let parts: Vec<&str> = parts.map(str::trim).collect();
        for (i, part) in parts.iter().enumerate() {
            if *part == "*" {
                if i + 1 != parts.len() {
                    return Err(err("`*` must come last"));
                }
                e.widened = true;
                break;
            }
            let (name, count) = match part.split_once('^') {
                Some((n, k)) => (n, k.parse::<usize>().map_err(|_| err("bad repetition count"))?),
                None => (*part, 1),
            };
            if !is_ident(name) || count == 0 {
                return Err(err("expected a selector"));
            }
            e.selectors.extend(std::iter::repeat_n(Name::from(name), count));
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_groups_repetitions() {
        let e = AliasExpr::var("y").dot("next").dot("next").dot("val");
        assert_eq!(e.to_string(), "y.next^2.val");
        assert_eq!(e.clone().widen().to_string(), "y.next^2.val.*");
        assert_eq!("y.next^2.val".parse::<AliasExpr>().unwrap(), e);
        assert_eq!("y.next^2.val.*".parse::<AliasExpr>().unwrap(), e.widen());
    }

    #[test]
    fn extend_truncates_and_widens() {
        let y = AliasExpr::var("y");
        let next: Name = "next".into();
        let e = y.extend(&[next.clone(), next.clone(), next.clone(), next.clone()], 3);
        assert_eq!(e.to_string(), "y.next^3.*");
        assert_eq!(e.extend(&[next], 3), e);
    }

    #[test]
    fn rejects_garbage() {
        assert!("".parse::<AliasExpr>().is_err());
        assert!("x.*.y".parse::<AliasExpr>().is_err());
        assert!("x.f^0".parse::<AliasExpr>().is_err());
        assert!("3x".parse::<AliasExpr>().is_err());
    }

    #[test]
    fn frame_and_label_roots_print() {
        let f = AliasExpr::new(Root::Frame { name: "fa".into(), processor: ProcessorId(5), depth: 2 });
        assert_eq!(f.dot("x").to_string(), "fa@5.2.x");
        assert_eq!(AliasExpr::label(3).to_string(), "o3");
    }
}
