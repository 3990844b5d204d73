//! State specification documents and deterministic report serialization.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distribution::{GridSpec, MomentumGrid};
use crate::error::{OsgError, Result};
use crate::state::{
    family_state, noon_state, one_photon_state, two_photon_state, AtomState, CouplingParams,
    TwoModeState,
};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderName {
    OnePhoton,
    TwoPhoton,
    Noon,
    Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderSpec {
    pub name: BuilderName,
    pub args: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSpec {
    pub m: i64,
    pub n: i64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSpec {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub c_g: ComplexSpec,
    pub c_e: ComplexSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub lambda: f64,
    pub k_delta_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<BuilderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<AmplitudeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<AtomSpec>,
    pub params: ParamsSpec,
}

/// Result of resolving a [`StateSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSpec {
    pub state: TwoModeState,
    pub atom: AtomState,
    pub params: CouplingParams,
    /// Factor applied to the listed amplitudes to reach unit norm.
    pub norm_correction: f64,
}

fn parse_err(context: &str, message: impl Into<String>) -> OsgError {
    OsgError::Parse {
        context: context.to_string(),
        message: message.into(),
    }
}

fn integer_arg(args: &[f64], i: usize, field: &str) -> Result<usize> {
    let v = *args
        .get(i)
        .ok_or_else(|| parse_err(field, format!("missing argument {i}")))?;
    if v.fract() != 0.0 || v < 0.0 || !v.is_finite() {
        return Err(parse_err(field, format!("argument {i} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

fn expect_args(b: &BuilderSpec, count: usize) -> Result<()> {
    if b.args.len() != count {
        return Err(parse_err(
            "builder.args",
            format!("{:?} takes {count} argument(s), got {}", b.name, b.args.len()),
        ));
    }
    Ok(())
}

impl StateSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_err("state spec", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Explicit-amplitude spec reproducing `state` exactly.
    pub fn from_state(state: &TwoModeState, atom: &AtomState, params: &CouplingParams) -> Self {
        Self {
            builder: None,
            amplitudes: Some(
                state
                    .iter()
                    .map(|((m, n), c)| AmplitudeSpec {
                        m: m as i64,
                        n: n as i64,
                        re: c.re,
                        im: c.im,
                    })
                    .collect(),
            ),
            atom: Some(AtomSpec {
                c_g: ComplexSpec {
                    re: atom.c_g.re,
                    im: atom.c_g.im,
                },
                c_e: ComplexSpec {
                    re: atom.c_e.re,
                    im: atom.c_e.im,
                },
            }),
            params: ParamsSpec {
                lambda: params.lambda,
                k_delta_r: params.k_delta_r,
            },
        }
    }

    pub fn resolve(&self) -> Result<ParsedSpec> {
        let (raw, from_builder) = match (&self.builder, &self.amplitudes) {
            (Some(b), None) => (self.build(b)?, true),
            (None, Some(list)) => (Self::explicit(list)?, false),
            (Some(_), Some(_)) => {
                return Err(parse_err("state spec", "give either builder or amplitudes, not both"))
            }
            (None, None) => return Err(parse_err("state spec", "missing builder or amplitudes")),
        };
        let n2 = raw.norm_sqr();
        let state = raw.normalize()?;
        let norm_correction = if from_builder || state == raw { 1.0 } else { 1.0 / n2.sqrt() };
        let atom = match &self.atom {
            None => AtomState::excited(),
            Some(a) => AtomState::normalized(
                Complex64::new(a.c_g.re, a.c_g.im),
                Complex64::new(a.c_e.re, a.c_e.im),
            )
            .map_err(|e| parse_err("atom", e.to_string()))?,
        };
        let params = CouplingParams::new(self.params.lambda, self.params.k_delta_r)?;
        Ok(ParsedSpec {
            state,
            atom,
            params,
            norm_correction,
        })
    }

    fn build(&self, b: &BuilderSpec) -> Result<TwoModeState> {
        if b.args.iter().any(|a| !a.is_finite()) {
            return Err(parse_err("builder.args", "arguments must be finite"));
        }
        match b.name {
            BuilderName::OnePhoton => {
                expect_args(b, 1)?;
                one_photon_state(b.args[0])
            }
            BuilderName::TwoPhoton => {
                expect_args(b, 1)?;
                two_photon_state(b.args[0])
            }
            BuilderName::Noon => {
                expect_args(b, 1)?;
                noon_state(integer_arg(&b.args, 0, "builder.args")?)
            }
            BuilderName::Family => {
                expect_args(b, 2)?;
                let j = integer_arg(&b.args, 0, "builder.args")?;
                let q = integer_arg(&b.args, 1, "builder.args")?;
                Ok(family_state(j, q)?.state)
            }
        }
    }

    fn explicit(list: &[AmplitudeSpec]) -> Result<TwoModeState> {
        let mut entries = Vec::with_capacity(list.len());
        for (i, a) in list.iter().enumerate() {
            let ctx = format!("amplitudes[{i}]");
            if a.m < 0 || a.n < 0 {
                return Err(parse_err(&ctx, "photon indices must be non-negative"));
            }
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(parse_err(&ctx, "amplitude must be finite"));
            }
            entries.push(((a.m as usize, a.n as usize), Complex64::new(a.re, a.im)));
        }
        let state = TwoModeState::from_amplitudes(entries)
            .map_err(|e| parse_err("amplitudes", e.to_string()))?;
        if state.is_empty() || state.norm_sqr() == 0.0 {
            return Err(parse_err("amplitudes", "state has zero norm"));
        }
        Ok(state)
    }
}

pub fn parse_state_spec(text: &str) -> Result<ParsedSpec> {
    StateSpec::from_json(text)?.resolve()
}

/// Rounds to 12 significant digits so reports compare byte-for-byte.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) => match (n.is_f64(), n.as_f64()) {
            (true, Some(x)) => serde_json::Number::from_f64(round_sig(x))
                .map(Value::Number)
                .unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_report_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| OsgError::Io(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&round_value(v)).map_err(|e| OsgError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMetadata<'a> {
    pub artifact_version: &'a str,
    pub state_spec: &'a StateSpec,
    pub lambda: f64,
    pub k_delta_r: f64,
    pub grid: GridSpec,
    pub kernel: crate::distribution::KernelMode,
    pub profile: &'a str,
    pub state_fingerprint: &'a str,
    pub norm_correction: f64,
    pub total_probability: f64,
    pub warnings: &'a [String],
}

/// Writes `grid.csv` and the `grid.json` sidecar into `dir`.
pub fn write_grid(
    dir: &Path,
    grid: &MomentumGrid,
    spec: &StateSpec,
    norm_correction: f64,
    grid_spec: &GridSpec,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("grid.csv"))?);
    grid.write_csv(&mut csv)?;
    std::io::Write::flush(&mut csv)?;
    let resolved = GridSpec {
        p_max: Some(*grid.radial_values.last().expect("non-empty grid")),
        ..*grid_spec
    };
    let meta = GridMetadata {
        artifact_version: ARTIFACT_VERSION,
        state_spec: spec,
        lambda: grid.meta.params.lambda,
        k_delta_r: grid.meta.params.k_delta_r,
        grid: resolved,
        kernel: grid.meta.kernel,
        profile: &grid.meta.profile,
        state_fingerprint: &grid.meta.state_fingerprint,
        norm_correction,
        total_probability: crate::distribution::total_probability(grid),
        warnings: &grid.meta.warnings,
    };
    std::fs::write(dir.join("grid.json"), to_report_json(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_documents() {
        let p = parse_state_spec(r#"{"builder":{"name":"noon","args":[2]},"params":{"lambda":100,"k_delta_r":0.1}}"#)
            .unwrap();
        assert_eq!(p.state, noon_state(2).unwrap());
        assert_eq!(p.params.lambda, 100.0);
        assert_eq!(p.atom, AtomState::excited());
        let p = parse_state_spec(r#"{"builder":{"name":"family","args":[1,1]},"params":{"lambda":20,"k_delta_r":0.1}}"#)
            .unwrap();
        assert_eq!(p.state, family_state(1, 1).unwrap().state);
    }

    #[test]
    fn amplitude_documents() {
        let p = parse_state_spec(
            r#"{"amplitudes":[{"m":1,"n":0,"re":1,"im":0}],"params":{"lambda":20,"k_delta_r":0.1}}"#,
        )
        .unwrap();
        assert_eq!(p.state, TwoModeState::fock(1, 0).unwrap());
        assert_eq!(p.norm_correction, 1.0);
        let p = parse_state_spec(
            r#"{"amplitudes":[{"m":1,"n":0,"re":3,"im":0},{"m":0,"n":1,"re":0,"im":4}],
               "atom":{"c_g":{"re":1,"im":0},"c_e":{"re":1,"im":0}},
               "params":{"lambda":20,"k_delta_r":0.1}}"#,
        )
        .unwrap();
        assert!((p.norm_correction - 0.2).abs() < 1e-15);
        assert!((p.atom.c_g.re - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn malformed_documents_are_parse_errors() {
        let bad = [
            r#"{"amplitudes":[{"m":-1,"n":0,"re":1,"im":0}],"params":{"lambda":20,"k_delta_r":0.1}}"#,
            r#"{"amplitudes":[{"m":1,"n":0,"re":0,"im":0}],"params":{"lambda":20,"k_delta_r":0.1}}"#,
            r#"{"builder":{"name":"noon","args":[2]},"params":{"lambda":20,"k_delta_r":0.1},"extra":1}"#,
            r#"{"builder":{"name":"noon","args":[1.5]},"params":{"lambda":20,"k_delta_r":0.1}}"#,
            r#"{"builder":{"name":"laser","args":[1]},"params":{"lambda":20,"k_delta_r":0.1}}"#,
            r#"{"params":{"lambda":20,"k_delta_r":0.1}}"#,
            r#"{"builder":{"name":"noon","args":[2]}"#,
        ];
        for doc in bad {
            let err = parse_state_spec(doc).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{doc}: {err}");
        }
        let err = parse_state_spec(r#"{"builder":{"name":"noon","args":[2]},"params":{"lambda":-1,"k_delta_r":0.1}}"#)
            .unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let state = two_photon_state(0.123456789).unwrap();
        let params = CouplingParams::new(20.0, 0.1).unwrap();
        let spec = StateSpec::from_state(&state, &AtomState::excited(), &params);
        let back = parse_state_spec(&spec.to_json()).unwrap();
        for ((k, a), (k2, b)) in state.iter().zip(back.state.iter()) {
            assert_eq!(k, k2);
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn report_numbers_have_twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(0.0), 0.0);
        let s = to_report_json(&serde_json::json!({"x": 2.0f64.sqrt(), "n": 3})).unwrap();
        assert!(s.contains("1.41421356237"));
        assert!(s.contains("\"n\": 3"));
    }
}
