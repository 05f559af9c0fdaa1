//! Model hyper-parameters and the block depth schedule.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config_err;
use crate::error::Result;

/// Kernel size used by every involution in the network.
pub const INVOLUTION_KERNEL: usize = 3;
/// Involution group count (one shared kernel per pixel across all channels).
pub const INVOLUTION_GROUPS: usize = 1;
/// Channel reduction ratio inside the involution kernel generator.
pub const INVOLUTION_REDUCTION: usize = 4;

/// Negative slope shared by every leaky ReLU in the network.
pub const ALPHA: f64 = 0.05;
/// Running-statistics momentum for batch norm layers.
pub const BN_MOMENTUM: f64 = 0.1;
/// Variance floor for batch norm layers.
pub const BN_EPS: f64 = 1e-5;

/// The operator a shallow residual block is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// Blueprint-separable 3x3 convolution.
    Bsconv,
    /// Pixel-adaptive 3x3 involution.
    Involution,
}

impl OperatorKind {
    /// Single-letter form used in schedule strings and checkpoints.
    pub fn letter(self) -> char {
        match self {
            OperatorKind::Bsconv => 'B',
            OperatorKind::Involution => 'I',
        }
    }

    /// Inverse of [`letter`](Self::letter).
    pub fn from_letter(c: char) -> Result<Self> {
        match c {
            'B' => Ok(OperatorKind::Bsconv),
            'I' => Ok(OperatorKind::Involution),
            _ => Err(config_err!("unknown operator letter {c:?}, expected 'B' or 'I'")),
        }
    }
}

/// Per-block operator triples: which kind each of the three stacked residual
/// blocks inside a distillation block uses.
///
/// The default six-block schedule shifts from all-convolution blocks at the
/// shallow end to all-involution at the deep end, so early blocks favour
/// local detail extraction and later ones favour spatially adaptive mixing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthSchedule {
    triples: Vec<[OperatorKind; 3]>,
}

/// The canonical six-block arrangement: BBB-BBB-BIB-BIB-IBI-III.
const CANONICAL: [[OperatorKind; 3]; 6] = {
    use OperatorKind::{Bsconv as B, Involution as I};
    [
        [B, B, B],
        [B, B, B],
        [B, I, B],
        [B, I, B],
        [I, B, I],
        [I, I, I],
    ]
};

impl DepthSchedule {
    /// Builds a schedule from explicit triples.
    pub fn new(triples: Vec<[OperatorKind; 3]>) -> Result<Self> {
        if triples.is_empty() {
            return Err(config_err!("depth schedule must contain at least one block"));
        }
        Ok(DepthSchedule { triples })
    }

    /// The default schedule for `n_blocks` blocks.
    ///
    /// Six blocks get the canonical arrangement verbatim. Other counts sample
    /// the canonical progression at matching relative depths, preserving the
    /// convolution-to-involution gradient without inventing new triples.
    pub fn default_for(n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 {
            return Err(config_err!("depth schedule must contain at least one block"));
        }
        let triples = (0..n_blocks)
            .map(|i| {
                if n_blocks == 1 {
                    CANONICAL[0]
                } else {
                    // Round to the nearest canonical slot at the same depth fraction.
                    let num = i * (CANONICAL.len() - 1) * 2 + (n_blocks - 1);
                    CANONICAL[num / (2 * (n_blocks - 1))]
                }
            })
            .collect();
        Ok(DepthSchedule { triples })
    }

    /// Number of blocks in the schedule.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    /// True when the schedule has no blocks (never constructible).
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// The operator triples, one per block.
    pub fn triples(&self) -> &[[OperatorKind; 3]] {
        &self.triples
    }

    /// Counts of (convolution, involution) operators across all blocks.
    pub fn counts(&self) -> (usize, usize) {
        let mut b = 0;
        let mut i = 0;
        for t in &self.triples {
            for k in t {
                match k {
                    OperatorKind::Bsconv => b += 1,
                    OperatorKind::Involution => i += 1,
                }
            }
        }
        (b, i)
    }

    /// Dash-separated string form, e.g. `"BBB-BBB-BIB-BIB-IBI-III"`.
    pub fn as_string(&self) -> String {
        let mut s = String::with_capacity(self.triples.len() * 4);
        for (i, t) in self.triples.iter().enumerate() {
            if i > 0 {
                s.push('-');
            }
            for k in t {
                s.push(k.letter());
            }
        }
        s
    }

    /// Parses the [`as_string`](Self::as_string) form.
    pub fn parse(s: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for group in s.split('-') {
            let chars: Vec<char> = group.chars().collect();
            if chars.len() != 3 {
                return Err(config_err!(
                    "schedule group {group:?} must be exactly three operator letters"
                ));
            }
            triples.push([
                OperatorKind::from_letter(chars[0])?,
                OperatorKind::from_letter(chars[1])?,
                OperatorKind::from_letter(chars[2])?,
            ]);
        }
        Self::new(triples)
    }
}

impl Default for DepthSchedule {
    fn default() -> Self {
        DepthSchedule { triples: CANONICAL.to_vec() }
    }
}

/// Complete structural description of a super-resolution model.
///
/// Everything needed to rebuild the network byte-for-byte lives here; a
/// checkpoint stores this alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    /// Upscaling factor; one of 2, 3 or 4.
    pub scale: usize,
    /// Feature width carried between blocks.
    pub nf: usize,
    /// Distillation width: channels each refinement stage keeps.
    pub nd: usize,
    /// Number of distillation blocks.
    pub n_blocks: usize,
    /// Operator triple per block; length must equal `n_blocks`.
    pub schedule: DepthSchedule,
    /// Trunk width inside the attention branch.
    pub chfab_channels: usize,
}

impl ModelSpec {
    /// The published configuration for a given scale: nf=50, nd=25, six
    /// blocks on the canonical schedule, attention trunk of 8.
    pub fn standard(scale: usize) -> Result<Self> {
        let spec = ModelSpec {
            scale,
            nf: 50,
            nd: 25,
            n_blocks: 6,
            schedule: DepthSchedule::default(),
            chfab_channels: 8,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every structural invariant, returning an invalid-config error
    /// naming the first violated one.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2..=4) {
            return Err(config_err!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.nf == 0 {
            return Err(config_err!("nf must be positive"));
        }
        if self.nd == 0 {
            return Err(config_err!("nd must be positive"));
        }
        if self.nd >= self.nf {
            return Err(config_err!(
                "distillation width nd={} must be smaller than feature width nf={}",
                self.nd,
                self.nf
            ));
        }
        if self.n_blocks == 0 {
            return Err(config_err!("n_blocks must be positive"));
        }
        if self.schedule.len() != self.n_blocks {
            return Err(config_err!(
                "schedule has {} blocks but n_blocks is {}",
                self.schedule.len(),
                self.n_blocks
            ));
        }
        if self.chfab_channels == 0 {
            return Err(config_err!("chfab_channels must be positive"));
        }
        if self.chfab_channels > self.nf {
            return Err(config_err!(
                "attention trunk {} wider than feature width {}",
                self.chfab_channels,
                self.nf
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_canonical() {
        let s = DepthSchedule::default();
        assert_eq!(s.as_string(), "BBB-BBB-BIB-BIB-IBI-III");
        assert_eq!(s.counts(), (11, 7));
    }

    #[test]
    fn default_for_six_matches_default() {
        assert_eq!(DepthSchedule::default_for(6).unwrap(), DepthSchedule::default());
    }

    #[test]
    fn default_for_other_lengths_keeps_endpoints() {
        for n in [1, 2, 3, 4, 5, 7, 8, 12] {
            let s = DepthSchedule::default_for(n).unwrap();
            assert_eq!(s.len(), n);
            let t = s.triples();
            assert_eq!(t[0], [OperatorKind::Bsconv; 3], "n={n}");
            if n > 1 {
                assert_eq!(t[n - 1], [OperatorKind::Involution; 3], "n={n}");
            }
        }
    }

    #[test]
    fn schedule_string_roundtrip() {
        for n in [1, 3, 6, 9] {
            let s = DepthSchedule::default_for(n).unwrap();
            assert_eq!(DepthSchedule::parse(&s.as_string()).unwrap(), s);
        }
        assert!(DepthSchedule::parse("BBX").is_err());
        assert!(DepthSchedule::parse("BB").is_err());
        assert!(DepthSchedule::parse("").is_err());
    }

    #[test]
    fn spec_validation_rejects_bad_configs() {
        assert!(ModelSpec::standard(2).is_ok());
        assert!(ModelSpec::standard(3).is_ok());
        assert!(ModelSpec::standard(4).is_ok());
        assert!(ModelSpec::standard(1).is_err());
        assert!(ModelSpec::standard(5).is_err());

        let mut spec = ModelSpec::standard(2).unwrap();
        spec.nd = 50;
        assert!(spec.validate().is_err(), "nd must stay below nf");

        let mut spec = ModelSpec::standard(2).unwrap();
        spec.chfab_channels = 51;
        assert!(spec.validate().is_err(), "trunk wider than nf");

        let mut spec = ModelSpec::standard(2).unwrap();
        spec.n_blocks = 5;
        assert!(spec.validate().is_err(), "schedule length mismatch");
    }
}
