//! Network assembly, parameter and FLOP accounting, top-k evaluation.

mod config;

pub use config::{BlockTemplate, Downsample, ModelConfig, Stem, StageConfig, StemLayer, Variant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{Block, Flops};
use crate::error::{shape_err, Error, Result};
use crate::ops::Conv2dSpec;
use crate::params::{Bound, Conv, Init, Linear, Norm, ParamStore};
pub use crate::params::{Param, ParamId};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Clone, Debug)]
enum StemUnit {
    /// Conv followed by GELU.
    Conv(Conv),
    /// `x + GELU(conv(x))`.
    Residual(Conv),
    /// Patch embedding conv followed by a layer norm.
    Patch(Conv, Norm),
}

#[derive(Clone, Debug)]
enum Down {
    DwPw(Conv, Conv),
    Merge(Norm, Conv),
}

#[derive(Clone, Debug)]
struct Stage {
    down: Option<Down>,
    blocks: Vec<Block>,
}

/// Output extent of one named section of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Per-section FLOPs for one sample.
#[derive(Clone, Debug)]
pub struct FlopReport {
    pub sections: Vec<(String, Flops)>,
}

impl FlopReport {
    pub fn total(&self) -> Flops {
        self.sections.iter().map(|(_, f)| *f).sum()
    }
}

/// A built network: its configuration, parameters and layer structure.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    stem: Vec<StemUnit>,
    stages: Vec<Stage>,
    head_norm: Norm,
    head: Linear,
}

fn stem_conv(cin: usize, cout: usize, k: usize, stride: usize) -> Conv2dSpec {
    Conv2dSpec::new(cin, cout, k).with_stride(stride).same_padding()
}

impl<T: Scalar> Model<T> {
    /// Builds and initializes the network. Identical `(config, seed)` pairs
    /// give bit-identical parameters.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut params, &mut rng);

        let mut stem = Vec::new();
        let mut c = config.input[0];
        {
            let mut si = init.scope("stem");
            match &config.stem {
                Stem::Conv { layers } => {
                    for (i, l) in layers.iter().enumerate() {
                        let mut li = si.scope(i);
                        stem.push(StemUnit::Conv(li.conv("conv", stem_conv(c, l.channels, l.kernel, l.stride))?));
                        c = l.channels;
                        for j in 0..l.blocks {
                            let conv = li.conv(&format!("res{j}"), stem_conv(c, c, 3, 1))?;
                            stem.push(StemUnit::Residual(conv));
                        }
                    }
                }
                Stem::Patch { channels, patch } => {
                    let spec = Conv2dSpec::new(c, *channels, *patch).with_stride(*patch);
                    let conv = si.conv("proj", spec)?;
                    stem.push(StemUnit::Patch(conv, si.norm("norm", *channels)?));
                    c = *channels;
                }
            }
        }

        let mut stages = Vec::new();
        for (si, sc) in config.stages.iter().enumerate() {
            let mut st = init.scope(format!("stages.{si}"));
            let down = match sc.downsample {
                Downsample::None => None,
                Downsample::DwPw => Some(Down::DwPw(
                    st.conv("down.dw", Conv2dSpec::depthwise(c, 3, 1).with_stride(2))?,
                    st.conv("down.pw", Conv2dSpec::pointwise(c, sc.channels, 1))?,
                )),
                Downsample::PatchMerge => Some(Down::Merge(
                    st.norm("down.norm", c)?,
                    st.conv("down.conv", Conv2dSpec::new(c, sc.channels, 2).with_stride(2).without_bias())?,
                )),
            };
            c = sc.channels;
            let bc = config.block.for_stage(sc.kind, c);
            let blocks = (0..sc.blocks)
                .map(|b| Block::new(&mut st.scope(format!("blocks.{b}")), &bc, b))
                .collect::<Result<_>>()?;
            stages.push(Stage { down, blocks });
        }

        let head_norm = init.norm("head.norm", c)?;
        let head = init.linear("head.fc", c, config.num_classes)?;
        Ok(Self { config: config.clone(), params, stem, stages, head_norm, head })
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Logits `[B, num_classes]` for `x: [B, C, H, W]`.
    pub fn forward<'t>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.forward_traced(p, x)?.0)
    }

    /// Forward pass that also records the output shape of the stem and of
    /// every stage.
    pub fn forward_traced<'t>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<(Var<'t, T>, Vec<StageShape>)> {
        let [c, h, w] = self.config.input;
        let s = x.shape();
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(shape_err!("model expects [B, {c}, {h}, {w}], got {s:?}"));
        }
        let mut trace = Vec::new();
        let mut x = x;
        for unit in &self.stem {
            x = match unit {
                StemUnit::Conv(conv) => conv.forward(p, x)?.gelu(),
                StemUnit::Residual(conv) => conv.forward(p, x)?.gelu().add(x)?,
                StemUnit::Patch(conv, norm) => norm.forward(p, conv.forward(p, x)?)?,
            };
        }
        trace.push(StageShape { name: "stem".into(), shape: x.shape() });
        for (i, stage) in self.stages.iter().enumerate() {
            x = match &stage.down {
                None => x,
                Some(Down::DwPw(dw, pw)) => pw.forward(p, dw.forward(p, x)?)?,
                Some(Down::Merge(norm, conv)) => conv.forward(p, norm.forward(p, x)?)?,
            };
            for b in &stage.blocks {
                x = b.forward(p, x)?;
            }
            trace.push(StageShape { name: format!("stage{}", i + 1), shape: x.shape() });
        }
        let pooled = self.head_norm.forward(p, x.global_avg_pool()?)?;
        let logits = self.head.forward(p, pooled)?;
        trace.push(StageShape { name: "head".into(), shape: logits.shape() });
        Ok((logits, trace))
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let y = self.forward(&p, tape.constant(x.clone()))?;
        Ok((*y.value()).clone())
    }

    /// Per-sample output shapes, computed from the config without running
    /// the network.
    pub fn shape_schedule(&self) -> Result<Vec<StageShape>> {
        Ok(self.walk(self.config.input[1], self.config.input[2])?.0)
    }

    /// FLOPs of one sample at input extent `h x w`.
    pub fn count_flops(&self, h: usize, w: usize) -> Result<FlopReport> {
        Ok(self.walk(h, w)?.1)
    }

    fn walk(&self, mut h: usize, mut w: usize) -> Result<(Vec<StageShape>, FlopReport)> {
        let mut shapes = Vec::new();
        let mut sections = Vec::new();
        let mut f = Flops::default();
        let mut c = self.config.input[0];
        let conv = |conv: &Conv, h: &mut usize, w: &mut usize, f: &mut Flops| -> Result<usize> {
            *f += Flops::dense(conv.flops(*h, *w)?);
            (*h, *w) = conv.spec.out_extent(*h, *w)?;
            Ok(conv.spec.out_ch)
        };
        for unit in &self.stem {
            c = match unit {
                StemUnit::Conv(cv) | StemUnit::Residual(cv) | StemUnit::Patch(cv, _) => conv(cv, &mut h, &mut w, &mut f)?,
            };
        }
        shapes.push(StageShape { name: "stem".into(), shape: vec![c, h, w] });
        sections.push(("stem".to_string(), f));
        for (i, stage) in self.stages.iter().enumerate() {
            let mut f = Flops::default();
            match &stage.down {
                None => {}
                Some(Down::DwPw(dw, pw)) => {
                    conv(dw, &mut h, &mut w, &mut f)?;
                    c = conv(pw, &mut h, &mut w, &mut f)?;
                }
                Some(Down::Merge(_, cv)) => c = conv(cv, &mut h, &mut w, &mut f)?,
            }
            for b in &stage.blocks {
                f += b.flops(h, w)?;
            }
            let name = format!("stage{}", i + 1);
            shapes.push(StageShape { name: name.clone(), shape: vec![c, h, w] });
            sections.push((name, f));
        }
        shapes.push(StageShape { name: "head".into(), shape: vec![self.config.num_classes] });
        sections.push(("head".to_string(), Flops::dense(self.head.flops())));
        Ok((shapes, FlopReport { sections }))
    }

    /// Parameter count of the stem, each stage and the head.
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        let mut out = vec![("stem".to_string(), self.params.count_prefix("stem."))];
        for i in 0..self.stages.len() {
            out.push((format!("stage{}", i + 1), self.params.count_prefix(&format!("stages.{i}."))));
        }
        out.push(("head".to_string(), self.params.count_prefix("head.")));
        out
    }
}

/// Fraction of rows whose true label is among the `k` largest logits.
/// Ties rank the lower class index first.
pub fn top_k_accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize], k: usize) -> Result<f64> {
    let [b, classes] = *logits.shape() else {
        return Err(shape_err!("logits must be [B, K], got {:?}", logits.shape()));
    };
    if labels.len() != b {
        return Err(shape_err!("{} labels for {b} rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Contract(format!("label {bad} outside [0, {classes})")));
    }
    let hits = logits
        .data()
        .chunks(classes)
        .zip(labels)
        .filter(|(row, &l)| {
            let t = row[l];
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > t || (v == t && j < l))
                .count();
            rank < k
        })
        .count();
    Ok(hits as f64 / b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_break_prefers_lower_index() {
        let logits = Tensor::<f64>::zeros(&[4, 3]);
        assert_eq!(top_k_accuracy(&logits, &[0, 0, 1, 2], 1).unwrap(), 0.5);
        assert_eq!(top_k_accuracy(&logits, &[0, 1, 1, 2], 2).unwrap(), 0.75);
        assert!(top_k_accuracy(&logits, &[0, 1, 1, 3], 1).is_err());
    }

    #[test]
    fn narrow_builds_and_runs() {
        let cfg = ModelConfig::preset(Variant::Narrow).unwrap();
        let m = Model::<f32>::build(&cfg, 0).unwrap();
        let x = Tensor::<f32>::zeros(&[2, 3, 32, 32]);
        assert_eq!(m.predict(&x).unwrap().shape(), &[2, 4]);
        assert!(m.predict(&Tensor::zeros(&[2, 3, 16, 16])).is_err());
    }
}
