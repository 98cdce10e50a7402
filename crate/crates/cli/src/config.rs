//! Run configuration: built-in defaults, then an optional TOML file, then
//! explicit command-line flags.

use std::path::Path;

use fstucker::ingest::SynthParams;
use fstucker::pipeline::CompressConfig;
use fstucker::sketch::{SketchConfig, Transform};
use serde::{Deserialize, Serialize};

use crate::args::{SketchFlags, TuckerFlags};
use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub compress: CompressConfig,
    pub sketch: SketchConfig,
    pub synth: SynthParams,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Param(format!("{}: {e}", path.display())))
    }

    /// Applies the global seed to every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.compress.seed = seed;
        self.sketch.seed = seed;
    }

    pub fn apply_tucker(&mut self, f: &TuckerFlags) {
        let c = &mut self.compress;
        if let Some(e) = f.tucker_eps {
            c.epsilon = e;
        }
        if let Some(p) = f.basis_legendre_p {
            c.basis.legendre_p = Some(p);
        }
        if let Some(s) = f.basis_wavelet_s {
            c.basis.wavelet_s = Some(s);
        }
        if let Some(p) = f.basis_wavelet_p {
            c.basis.wavelet_p = p;
        }
        if f.no_legendre {
            c.basis.legendre_p = None;
        }
        if f.no_wavelet {
            c.basis.wavelet_s = None;
        }
    }

    pub fn apply_sketch(&mut self, f: &SketchFlags) -> Result<(), Failure> {
        let s = &mut self.sketch;
        if let Some(n) = f.sketch_s {
            s.sample_rows = Some(n);
        }
        if let Some(t) = &f.sketch_transform {
            s.transform = t.parse::<Transform>()?;
        }
        if let Some(w) = &f.sketch_working_subset {
            s.working_subset = match w.as_str() {
                "all" => None,
                n => Some(
                    n.parse().map_err(|_| Failure::Param(format!("working subset {n:?} is not a count or \"all\"")))?,
                ),
            };
        }
        if let Some(v) = f.sketch_validation_frac {
            s.validation_fraction = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_precedence() {
        let text = r#"
            seed = 4
            [compress]
            epsilon = 1e-3
            grid = [10, 12]
            [compress.basis]
            wavelet_s = 3
            [sketch]
            working_subset = "all"
            transform = "fft"
        "#;
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.compress.epsilon, 1e-3);
        assert_eq!(cfg.compress.basis.wavelet_s, Some(3));
        assert_eq!(cfg.compress.basis.legendre_p, Some(20));
        assert_eq!(cfg.sketch.working_subset, None);
        cfg.apply_tucker(&TuckerFlags { tucker_eps: Some(0.5), no_wavelet: true, ..Default::default() });
        assert_eq!(cfg.compress.epsilon, 0.5);
        assert_eq!(cfg.compress.basis.wavelet_s, None);
        cfg.apply_sketch(&SketchFlags { sketch_working_subset: Some("100".into()), ..Default::default() }).unwrap();
        assert_eq!(cfg.sketch.working_subset, Some(100));
        assert!(cfg.apply_sketch(&SketchFlags { sketch_transform: Some("dft".into()), ..Default::default() }).is_err());
        assert!(toml::from_str::<RunConfig>("[compress]\nepsilonn = 1").is_err());
    }
}
