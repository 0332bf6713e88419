//! Request traces and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub arrival_ms: f64,
    pub input_bytes: u64,
    /// Small-model confidence; sampled from the cascade's distribution when absent.
    #[serde(default)]
    pub confidence_small: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub requests: Vec<Request>,
}

const COLUMNS: [&str; 3] = ["arrival_ms", "input_bytes", "confidence_small"];

impl Trace {
    pub fn new(requests: Vec<Request>) -> Result<Self> {
        let trace = Self { requests };
        trace.check()?;
        Ok(trace)
    }

    /// `n` requests spaced `interval_ms` apart, starting at 0.
    pub fn constant_rate(n: usize, interval_ms: f64, input_bytes: u64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| Request {
                    arrival_ms: i as f64 * interval_ms,
                    input_bytes,
                    confidence_small: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn has_all_confidences(&self) -> bool {
        self.requests.iter().all(|r| r.confidence_small.is_some())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Trace(e.to_string()))?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 2 || names.len() > 3 || names[..] != COLUMNS[..names.len()] {
            return Err(Error::Trace(format!(
                "expected header `{}` (last column optional), got `{}`",
                COLUMNS.join(","),
                names.join(",")
            )));
        }
        let mut requests = Vec::new();
        for (line, row) in reader.deserialize::<Request>().enumerate() {
            requests.push(row.map_err(|e| Error::Trace(format!("row {}: {e}", line + 1)))?);
        }
        Self::new(requests)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for r in &self.requests {
            let conf = r
                .confidence_small
                .map(|c| c.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{conf}\n", r.arrival_ms, r.input_bytes));
        }
        out
    }

    fn check(&self) -> Result<()> {
        let mut last = 0.0;
        for (i, r) in self.requests.iter().enumerate() {
            if !(r.arrival_ms.is_finite() && r.arrival_ms >= 0.0) {
                return Err(Error::Trace(format!(
                    "request {i}: arrival_ms must be finite and >= 0"
                )));
            }
            if r.arrival_ms < last {
                return Err(Error::Trace(format!(
                    "request {i}: arrivals must be nondecreasing"
                )));
            }
            if r.input_bytes == 0 {
                return Err(Error::Trace(format!(
                    "request {i}: input_bytes must be positive"
                )));
            }
            if let Some(c) = r.confidence_small
                && !(0.0..=1.0).contains(&c)
            {
                return Err(Error::Trace(format!(
                    "request {i}: confidence_small {c} outside [0, 1]"
                )));
            }
            last = r.arrival_ms;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_confidence() {
        let t = Trace::from_csv_str("arrival_ms,input_bytes\n0,10\n5,20\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.requests[1].confidence_small, None);

        let t = Trace::from_csv_str("arrival_ms,input_bytes,confidence_small\n0,10,0.4\n1,10,\n")
            .unwrap();
        assert_eq!(t.requests[0].confidence_small, Some(0.4));
        assert_eq!(t.requests[1].confidence_small, None);
    }

    #[test]
    fn round_trips() {
        let t =
            Trace::from_csv_str("arrival_ms,input_bytes,confidence_small\n0.5,10,0.25\n1,11,\n")
                .unwrap();
        assert_eq!(Trace::from_csv_str(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_traces() {
        for text in [
            "a,b\n0,1\n",
            "arrival_ms,input_bytes\n5,10\n1,10\n",
            "arrival_ms,input_bytes\n0,0\n",
            "arrival_ms,input_bytes\n-1,4\n",
            "arrival_ms,input_bytes,confidence_small\n0,4,1.5\n",
            "arrival_ms,input_bytes\n0,x\n",
        ] {
            assert!(
                matches!(Trace::from_csv_str(text), Err(Error::Trace(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn constant_rate_spacing() {
        let t = Trace::constant_rate(3, 2.5, 100).unwrap();
        let at: Vec<_> = t.requests.iter().map(|r| r.arrival_ms).collect();
        assert_eq!(at, [0.0, 2.5, 5.0]);
    }
}
