//! Measurement series and fit results.

use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

/// Paired observations `y(x)` with optional 1σ errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_err: Option<Vec<f64>>,
}

impl MeasurementSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let s = Self { x, y, y_err: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_errors(x: Vec<f64>, y: Vec<f64>, y_err: Vec<f64>) -> Result<Self> {
        let s = Self { x, y, y_err: Some(y_err) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return domain(format!("{} x values but {} y values", self.x.len(), self.y.len()));
        }
        if self.x.is_empty() {
            return domain("series is empty");
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return domain("series contains non-finite values");
        }
        if let Some(e) = &self.y_err {
            if e.len() != self.x.len() {
                return domain(format!("{} errors for {} points", e.len(), self.x.len()));
            }
            if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return domain("y_err values must be positive and finite");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Copy sorted by ascending x (stable for ties).
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.x.len()).collect();
        idx.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]));
        Self {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            y_err: self.y_err.as_ref().map(|e| idx.iter().map(|&i| e[i]).collect()),
        }
    }

    /// Per-point weights 1/σ (all ones without errors).
    pub fn weights(&self) -> Vec<f64> {
        match &self.y_err {
            Some(e) => e.iter().map(|v| 1.0 / v).collect(),
            None => vec![1.0; self.x.len()],
        }
    }

    /// Reads `x,y[,y_err]` rows. Blank lines and `#` comments are skipped; an
    /// optional non-numeric header is allowed on the first data line.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (mut x, mut y, mut e) = (Vec::new(), Vec::new(), Vec::new());
        let mut width = None;
        let mut seen_data = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            if !seen_data && fields.iter().all(|f| f.parse::<f64>().is_err()) {
                seen_data = true; // header
                continue;
            }
            seen_data = true;
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::Parse { line: lineno, message: format!("expected 2 or 3 columns, found {}", fields.len()) });
            }
            match width {
                None => width = Some(fields.len()),
                Some(w) if w != fields.len() => {
                    return Err(Error::Parse { line: lineno, message: format!("expected {w} columns, found {}", fields.len()) })
                }
                _ => {}
            }
            let mut vals = [0.0; 3];
            for (k, f) in fields.iter().enumerate() {
                vals[k] = f
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: lineno, message: format!("invalid number '{f}'") })?;
            }
            x.push(vals[0]);
            y.push(vals[1]);
            if fields.len() == 3 {
                e.push(vals[2]);
            }
        }
        if x.is_empty() {
            return Err(Error::Parse { line: 0, message: "no data rows".into() });
        }
        let s = Self { x, y, y_err: if e.is_empty() { None } else { Some(e) } };
        s.validate()?;
        Ok(s)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.y_err {
            Some(e) => {
                writeln!(w, "x,y,y_err")?;
                for i in 0..self.x.len() {
                    writeln!(w, "{},{},{}", self.x[i], self.y[i], e[i])?;
                }
            }
            None => {
                writeln!(w, "x,y")?;
                for i in 0..self.x.len() {
                    writeln!(w, "{},{}", self.x[i], self.y[i])?;
                }
            }
        }
        Ok(())
    }
}

/// Non-finite values (unidentified uncertainties) are written as `null` and
/// read back as infinity.
mod nullable_map {
    use super::*;

    pub fn serialize<S: Serializer>(map: &IndexMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m: IndexMap<&String, Option<f64>> = map.iter().map(|(k, v)| (k, v.is_finite().then_some(*v))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<IndexMap<String, f64>, D::Error> {
        let m: IndexMap<String, Option<f64>> = IndexMap::deserialize(d)?;
        Ok(m.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::INFINITY))).collect())
    }
}

/// Named parameters with 1σ uncertainties and optimizer diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: IndexMap<String, f64>,
    #[serde(with = "nullable_map")]
    pub uncertainties: IndexMap<String, f64>,
    pub residual_norm: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Starting point of the reported solution.
    pub initial_guess: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    /// Quantities computed from the fitted model (no uncertainty attached).
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub derived: IndexMap<String, f64>,
}

impl FitResult {
    pub fn new(model: &str) -> Self {
        Self {
            model: model.to_string(),
            parameters: IndexMap::new(),
            uncertainties: IndexMap::new(),
            residual_norm: 0.0,
            n_iterations: 0,
            converged: true,
            initial_guess: IndexMap::new(),
            seed: None,
            flags: Vec::new(),
            derived: IndexMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64, uncertainty: f64) {
        self.parameters.insert(name.to_string(), value);
        self.uncertainties.insert(name.to_string(), uncertainty.abs());
    }

    /// Parameter value; panics on an unknown name.
    pub fn get(&self, name: &str) -> f64 {
        match self.parameters.get(name) {
            Some(v) => *v,
            None => panic!("no parameter '{name}' in {} fit", self.model),
        }
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.uncertainties.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn flag(&mut self, f: impl Into<String>) {
        let f = f.into();
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.iter().any(|x| x == f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One `name = value ± sigma` line per parameter.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} fit: converged={} iterations={} residual_norm={:.6e}\n",
            self.model, self.converged, self.n_iterations, self.residual_norm
        );
        for (k, v) in &self.parameters {
            out.push_str(&format!("  {k} = {v:.6e} ± {:.3e}\n", self.uncertainty(k)));
        }
        for (k, v) in &self.derived {
            out.push_str(&format!("  {k} = {v:.6e} (derived)\n"));
        }
        if !self.flags.is_empty() {
            out.push_str(&format!("  flags: {}\n", self.flags.join(", ")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let s = MeasurementSeries::read_csv("# comment\nx,y\n1,2\n\n3,4\n".as_bytes()).unwrap();
        assert_eq!(s.x, vec![1.0, 3.0]);
        assert!(s.y_err.is_none());
        let s = MeasurementSeries::read_csv("1,2,0.1\n3,4,0.2\n".as_bytes()).unwrap();
        assert_eq!(s.y_err, Some(vec![0.1, 0.2]));
        match MeasurementSeries::read_csv("x,y\n1,2\n3,abc\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match MeasurementSeries::read_csv("1,2\n3,4,5\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(MeasurementSeries::read_csv("x,y\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_and_sort() {
        let s = MeasurementSeries::with_errors(vec![3.0, 1.0, 2.0], vec![9.0, 1.0, 4.0], vec![0.1, 0.2, 0.3]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(MeasurementSeries::read_csv(buf.as_slice()).unwrap(), s);
        let t = s.sorted();
        assert_eq!(t.x, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.y_err, Some(vec![0.2, 0.3, 0.1]));
    }

    #[test]
    fn fit_result_json_nulls() {
        let mut r = FitResult::new("test");
        r.set("a", 1.0, 0.5);
        r.set("b", 2.0, f64::INFINITY);
        let js = r.to_json().unwrap();
        assert!(js.contains("\"b\": null"));
        let back: FitResult = serde_json::from_str(&js).unwrap();
        assert_eq!(back, r);
        assert!(r.summary().contains("a = 1.000000e0"));
    }
}
