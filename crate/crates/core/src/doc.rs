//! Versioned text documents for every persisted artifact.
//!
//! Each document is pretty-printed JSON wrapped in an envelope:
//!
//! ```text
//! {
//!   "format": "impq",
//!   "version": 1,
//!   "kind": "marginal_matrix",
//!   "body": { ... }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a document and
//! serializing it again reproduces the original bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "impq";
pub const VERSION: u32 = 1;

/// A type that can be persisted as a document of a fixed kind.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

pub fn to_string<T: Artifact>(value: &T) -> Result<String> {
    let env = EnvelopeRef {
        format: FORMAT,
        version: VERSION,
        kind: T::KIND,
        body: value,
    };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

pub fn from_str<T: Artifact>(text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    check_header(&header, T::KIND)?;
    let env: Envelope<T> = serde_json::from_str(text)?;
    debug_assert_eq!(env.kind, T::KIND);
    let _ = (env.format, env.version);
    Ok(env.body)
}

fn check_header(h: &Header, kind: &str) -> Result<()> {
    if h.format != FORMAT {
        return Err(Error::Document(format!("unknown format {:?}", h.format)));
    }
    if h.version != VERSION {
        return Err(Error::Document(format!(
            "unsupported version {} (expected {VERSION})",
            h.version
        )));
    }
    if h.kind != kind {
        return Err(Error::Document(format!(
            "expected a {kind} document, found {}",
            h.kind
        )));
    }
    Ok(())
}

/// Kind recorded in a document's envelope, without parsing the body.
pub fn kind_of(text: &str) -> Result<String> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != FORMAT {
        return Err(Error::Document(format!("unknown format {:?}", header.format)));
    }
    Ok(header.kind)
}

pub fn write<T: Artifact>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, to_string(value)?)?;
    Ok(())
}

pub fn read<T: Artifact>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
    from_str(&text).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
}

/// Parses and re-serializes a document; returns whether the bytes are unchanged.
pub fn round_trips<T: Artifact>(text: &str) -> Result<bool> {
    let value: T = from_str(text)?;
    Ok(to_string(&value)? == text)
}

/// Stable 16-hex-digit identifier of a serializable value.
pub fn fingerprint_of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Sample {
        values: Vec<f64>,
        name: String,
    }

    impl Artifact for Sample {
        const KIND: &'static str = "sample";
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Other {
        x: u32,
    }

    impl Artifact for Other {
        const KIND: &'static str = "other";
    }

    #[test]
    fn envelope_checked() {
        let text = to_string(&Sample {
            values: vec![0.1, 1e-300],
            name: "a".into(),
        })
        .unwrap();
        assert!(text.contains("\"kind\": \"sample\""));
        assert!(matches!(from_str::<Other>(&text), Err(Error::Document(_))));
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_str::<Sample>(&bumped), Err(Error::Document(_))));
        assert_eq!(kind_of(&text).unwrap(), "sample");
    }

    proptest! {
        #[test]
        fn floats_round_trip_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20)) {
            let s = Sample { values, name: "x".into() };
            let text = to_string(&s).unwrap();
            let back: Sample = from_str(&text).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert!(round_trips::<Sample>(&text).unwrap());
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint_of(&[1.0, 2.0]), fingerprint_of(&vec![1.0, 2.0]));
        assert_ne!(fingerprint_of(&[1.0, 2.0]), fingerprint_of(&[2.0, 1.0]));
        assert_eq!(fingerprint_of(&0u8).len(), 16);
    }
}
