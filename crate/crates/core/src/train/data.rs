use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Largest dataset, in scalar elements, a spec may request.
const MAX_ELEMENTS: usize = 1 << 28;

/// Which cues carry the label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Class `k` sets both the background frequency band and the
    /// orientation of the texture patch.
    Mixed,
    /// Only the patch orientation depends on the class; the background band
    /// is drawn independently and acts as a distractor.
    LocalTexture,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Mixed => "mixed",
            Task::LocalTexture => "local_texture",
        }
    }
}

/// Parameters of a synthetic classification set. Parses from
/// `synthetic:classes=4,size=32,per_class=64,seed=0,task=mixed`; omitted
/// keys keep their defaults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task: Task,
}

fn default_classes() -> usize {
    4
}
fn default_size() -> usize {
    32
}
fn default_per_class() -> usize {
    64
}
fn default_task() -> Task {
    Task::Mixed
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            size: default_size(),
            per_class: default_per_class(),
            seed: 0,
            task: default_task(),
        }
    }
}

impl DataSpec {
    pub fn len(&self) -> usize {
        self.classes * self.per_class
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(2..=64).contains(&self.classes) {
            return bad("classes must be in 2..=64");
        }
        if !(8..=1024).contains(&self.size) {
            return bad("size must be in 8..=1024");
        }
        if self.per_class == 0 {
            return bad("per_class must be positive");
        }
        let elems = self
            .classes
            .checked_mul(self.per_class)
            .and_then(|n| n.checked_mul(3 * self.size * self.size))
            .filter(|&n| n <= MAX_ELEMENTS);
        if elems.is_none() {
            return bad("dataset too large");
        }
        Ok(())
    }
}

impl FromStr for DataSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix("synthetic")
            .ok_or_else(|| Error::Config(format!("unknown data source in {s:?}")))?;
        let body = match body {
            "" => "",
            b => b.strip_prefix(':').ok_or_else(|| Error::Config(format!("expected ':' in {s:?}")))?,
        };
        let mut spec = DataSpec::default();
        for kv in body.split(',').filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {kv:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| Error::Config(format!("bad value for {k}: {v:?}")));
            let small = |v: &str| usize::try_from(num(v)?).map_err(|_| Error::Config(format!("{k} out of range")));
            match k {
                "classes" => spec.classes = small(v)?,
                "size" => spec.size = small(v)?,
                "per_class" => spec.per_class = small(v)?,
                "seed" => spec.seed = num(v)?,
                "task" => {
                    spec.task = match v {
                        "mixed" => Task::Mixed,
                        "local_texture" => Task::LocalTexture,
                        _ => return Err(Error::Config(format!("unknown task {v:?}"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown data key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "synthetic:classes={},size={},per_class={},seed={},task={}",
            self.classes,
            self.size,
            self.per_class,
            self.seed,
            self.task.name()
        )
    }
}

/// Lowest and highest radial frequency (cycles per pixel) used by the
/// background bands.
const BAND_LO: f64 = 0.04;
const BAND_HI: f64 = 0.46;
/// Sinusoids summed to form one band-limited background.
const WAVES: usize = 16;
/// Frequency of the texture patch grating, cycles per pixel.
const PATCH_FREQ: f64 = 0.22;
const PATCH_AMP: f64 = 2.0;
const PIXEL_NOISE: f64 = 0.1;
const CHANNEL_GAIN: [f64; 3] = [1.0, 0.8, 0.6];

/// In-memory synthetic images `[N, 3, S, S]` with integer labels.
///
/// Sample `i` has label `i % classes` and is generated from its own
/// ChaCha stream, so the set is a pure function of the `DataSpec`.
#[derive(Clone, Debug)]
pub struct SyntheticDataset<T: Scalar> {
    pub spec: DataSpec,
    images: Tensor<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> SyntheticDataset<T> {
    pub fn generate(spec: &DataSpec) -> Result<Self> {
        spec.validate()?;
        let s = spec.size;
        let plane = 3 * s * s;
        let mut data = vec![T::ZERO; spec.len() * plane];
        data.par_chunks_mut(plane).enumerate().for_each(|(i, out)| {
            let img = sample(spec, i);
            for (o, v) in out.iter_mut().zip(img) {
                *o = T::from_f64(v);
            }
        });
        let images = Tensor::new(&[spec.len(), 3, s, s], data)?;
        let labels = (0..spec.len()).map(|i| i % spec.classes).collect();
        Ok(Self { spec: spec.clone(), images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.classes
    }

    /// Per-sample shape `[3, S, S]`.
    pub fn sample_shape(&self) -> [usize; 3] {
        [3, self.spec.size, self.spec.size]
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Gathers the listed samples into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let plane = 3 * self.spec.size * self.spec.size;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!("sample {i} outside dataset of {}", self.len())));
            }
            data.extend_from_slice(&self.images.data()[i * plane..(i + 1) * plane]);
        }
        let s = self.spec.size;
        let x = Tensor::new(&[indices.len(), 3, s, s], data)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// One standardized image, channel-major.
fn sample(spec: &DataSpec, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let k = index % spec.classes;
    let band = match spec.task {
        Task::Mixed => k,
        Task::LocalTexture => rng.gen_range(0..spec.classes),
    };
    let s = spec.size;
    let n = s * s;

    // Band-limited background: random plane waves with radius in band `band`.
    let width = (BAND_HI - BAND_LO) / spec.classes as f64;
    let mut bg = vec![0.0; n];
    for _ in 0..WAVES {
        let r = BAND_LO + width * (band as f64 + rng.gen::<f64>());
        let dir = rng.gen::<f64>() * PI;
        let phase = rng.gen::<f64>() * 2.0 * PI;
        let (fx, fy) = (r * dir.cos(), r * dir.sin());
        for y in 0..s {
            for x in 0..s {
                bg[y * s + x] += (2.0 * PI * (fx * x as f64 + fy * y as f64) + phase).cos();
            }
        }
    }
    let norm = (2.0 / WAVES as f64).sqrt();
    bg.iter_mut().for_each(|v| *v *= norm);

    // Oriented grating under a Gaussian window at a random position.
    let theta = PI * k as f64 / spec.classes as f64;
    let sigma = s as f64 / 10.0;
    let margin = s as f64 / 4.0;
    let cx = rng.gen_range(margin..s as f64 - margin);
    let cy = rng.gen_range(margin..s as f64 - margin);
    let phase = rng.gen::<f64>() * 2.0 * PI;
    let (fx, fy) = (PATCH_FREQ * theta.cos(), PATCH_FREQ * theta.sin());
    for y in 0..s {
        for x in 0..s {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            bg[y * s + x] += PATCH_AMP * env * (2.0 * PI * (fx * dx + fy * dy) + phase).cos();
        }
    }

    let mut img = Vec::with_capacity(3 * n);
    for gain in CHANNEL_GAIN {
        for &v in &bg {
            img.push(gain * v + PIXEL_NOISE * rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
    }
    let mean = img.iter().sum::<f64>() / img.len() as f64;
    let var = img.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / img.len() as f64;
    let inv = 1.0 / var.sqrt().max(1e-12);
    img.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        let s = "synthetic:classes=4,size=32,per_class=64,seed=0,task=mixed";
        let spec: DataSpec = s.parse().unwrap();
        assert_eq!(spec, DataSpec::default());
        assert_eq!(spec.to_string(), s);
        let t: DataSpec = "synthetic:task=local_texture,seed=7".parse().unwrap();
        assert_eq!((t.task, t.seed, t.classes), (Task::LocalTexture, 7, 4));
        assert_eq!("synthetic".parse::<DataSpec>().unwrap(), DataSpec::default());
        for bad in [
            "imagenet:classes=4",
            "synthetic:classes=1",
            "synthetic:size=4",
            "synthetic:foo=1",
            "synthetic:classes",
            "synthetic:classes=-1",
            "synthetic:task=edges",
            "synthetic:per_class=0",
            "synthetic:classes=64,size=1024,per_class=1000",
            "synthetic:per_class=5167760026245616980",
            "syntheticx",
        ] {
            assert!(matches!(bad.parse::<DataSpec>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn deterministic_and_standardized() {
        let spec = DataSpec { per_class: 3, size: 16, ..DataSpec::default() };
        let a = SyntheticDataset::<f64>::generate(&spec).unwrap();
        let b = SyntheticDataset::<f64>::generate(&spec).unwrap();
        assert!(a.images().bit_eq(b.images()));
        assert_eq!(a.labels(), &[0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3]);
        let other = SyntheticDataset::<f64>::generate(&DataSpec { seed: 1, ..spec.clone() }).unwrap();
        assert!(!a.images().bit_eq(other.images()));
        for img in a.images().data().chunks(3 * 16 * 16) {
            let mean = img.iter().sum::<f64>() / img.len() as f64;
            let var = img.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
        let (x, y) = a.batch(&[5, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 3, 16, 16]);
        assert_eq!(y, vec![1, 0]);
        assert!(a.batch(&[12]).is_err());
    }
}
