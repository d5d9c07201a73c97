//! EDSR, pure Self-ONN and hybrid super-resolution networks.
//!
//! All three share one topology:
//!
//! ```text
//! x ─ head ─┬─ block0 … block{B-1} ─ mid ─(+)─ upsampler ─ tail ─ y
//!           └───────────────────────────────┘
//! ```
//!
//! and differ only in which layers are convolutions and which are SOLs:
//!
//! | arch    | head | blocks                      | mid, upsampler, tail |
//! |---------|------|-----------------------------|----------------------|
//! | edsr    | conv | residual                    | conv                 |
//! | selfonn | SOL  | SOR                         | SOL                  |
//! | hybrid  | conv | SOR for the first/last `num_sor`, residual otherwise | `upsampler_kind` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autograd::{Eval, Graph};
use crate::error::{Error, Result};
use crate::nn::{
    init_params, layer_forward, res_block_forward, sor_block_forward, upsampler_forward,
    upsampler_stages, LayerKind, LayerParams, LayerSpec,
};
use crate::tensor::Tensor;
use crate::train::checkpoint::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Edsr,
    SelfOnn,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SorPosition {
    First,
    Last,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsamplerKind {
    Conv,
    Sol,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:path => $kw:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $kw),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " '{}'"), other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Arch, "arch", Arch::Edsr => "edsr", Arch::SelfOnn => "selfonn", Arch::Hybrid => "hybrid");
keyword_enum!(SorPosition, "sor_position", SorPosition::First => "first", SorPosition::Last => "last");
keyword_enum!(UpsamplerKind, "upsampler_kind", UpsamplerKind::Conv => "conv", UpsamplerKind::Sol => "sol");

/// Declarative architecture description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub num_blocks: usize,
    pub num_sor: usize,
    pub sor_position: SorPosition,
    pub channels: usize,
    pub q: usize,
    pub scale: usize,
    pub upsampler_kind: UpsamplerKind,
}

/// Keys used when a spec is written as flat `key = value` text.
pub const SPEC_KEYS: [&str; 8] = [
    "arch",
    "num_blocks",
    "num_sor",
    "sor_position",
    "channels",
    "q",
    "scale",
    "upsampler_kind",
];

impl ModelSpec {
    /// EDSR baseline is `edsr(16, 64, scale)`.
    pub fn edsr(num_blocks: usize, channels: usize, scale: usize) -> Self {
        ModelSpec {
            arch: Arch::Edsr,
            num_blocks,
            num_sor: 0,
            sor_position: SorPosition::Last,
            channels,
            q: 1,
            scale,
            upsampler_kind: UpsamplerKind::Conv,
        }
    }

    pub fn selfonn(num_blocks: usize, channels: usize, q: usize, scale: usize) -> Self {
        ModelSpec {
            arch: Arch::SelfOnn,
            num_blocks,
            num_sor: num_blocks,
            sor_position: SorPosition::Last,
            channels,
            q,
            scale,
            upsampler_kind: UpsamplerKind::Sol,
        }
    }

    /// The best hybrid placement: 16 blocks, last 4 SOR, SOL upsampler.
    pub fn hybrid(scale: usize) -> Self {
        ModelSpec {
            arch: Arch::Hybrid,
            num_blocks: 16,
            num_sor: 4,
            sor_position: SorPosition::Last,
            channels: 64,
            q: 3,
            scale,
            upsampler_kind: UpsamplerKind::Sol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.q == 0 {
            return bad("q must be at least 1".into());
        }
        if upsampler_stages(self.scale).is_err() {
            return bad(format!("scale {} unsupported; expected 2 or 4", self.scale));
        }
        match self.arch {
            Arch::Edsr => {
                if self.num_sor != 0 {
                    return bad(format!("edsr has no SOR blocks, got num_sor = {}", self.num_sor));
                }
                if self.upsampler_kind != UpsamplerKind::Conv {
                    return bad("edsr requires upsampler_kind = conv".into());
                }
            }
            Arch::SelfOnn => {
                if self.num_sor != self.num_blocks {
                    return bad(format!(
                        "selfonn uses SOR for every block: num_sor = {} but num_blocks = {}",
                        self.num_sor, self.num_blocks
                    ));
                }
                if self.upsampler_kind != UpsamplerKind::Sol {
                    return bad("selfonn requires upsampler_kind = sol".into());
                }
            }
            Arch::Hybrid => {
                if self.num_sor > self.num_blocks {
                    return bad(format!(
                        "num_sor = {} exceeds num_blocks = {}",
                        self.num_sor, self.num_blocks
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_sor_block(&self, i: usize) -> bool {
        match self.arch {
            Arch::Edsr => false,
            Arch::SelfOnn => true,
            Arch::Hybrid => match self.sor_position {
                SorPosition::First => i < self.num_sor,
                SorPosition::Last => i >= self.num_blocks - self.num_sor,
            },
        }
    }

    fn tail_kind(&self) -> LayerKind {
        match self.upsampler_kind {
            UpsamplerKind::Conv => LayerKind::Conv,
            UpsamplerKind::Sol => LayerKind::Sol { q: self.q },
        }
    }

    /// `(prefix, layer)` for every layer, in canonical order.
    pub fn layers(&self) -> Result<Vec<(String, LayerSpec)>> {
        self.validate()?;
        let c = self.channels;
        let sol = LayerKind::Sol { q: self.q };
        let mk = |kind, cin, cout| LayerSpec { kind, cin, cout };
        let head_kind = if self.arch == Arch::SelfOnn { sol } else { LayerKind::Conv };
        let tail_kind = self.tail_kind();

        let mut out = vec![("head".to_string(), mk(head_kind, 3, c))];
        for i in 0..self.num_blocks {
            if self.is_sor_block(i) {
                out.push((format!("block{i}.sol1"), mk(sol, c, c)));
                out.push((format!("block{i}.sol2"), mk(sol, c, c)));
            } else {
                out.push((format!("block{i}.conv1"), mk(LayerKind::Conv, c, c)));
                out.push((format!("block{i}.conv2"), mk(LayerKind::Conv, c, c)));
            }
        }
        out.push(("mid".to_string(), mk(tail_kind, c, c)));
        for j in 0..upsampler_stages(self.scale)? {
            out.push((format!("upsampler.stage{j}"), mk(tail_kind, c, 4 * c)));
        }
        out.push(("tail".to_string(), mk(tail_kind, c, 3)));
        Ok(out)
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("arch".into(), self.arch.to_string());
        m.insert("num_blocks".into(), self.num_blocks.to_string());
        m.insert("num_sor".into(), self.num_sor.to_string());
        m.insert("sor_position".into(), self.sor_position.to_string());
        m.insert("channels".into(), self.channels.to_string());
        m.insert("q".into(), self.q.to_string());
        m.insert("scale".into(), self.scale.to_string());
        m.insert("upsampler_kind".into(), self.upsampler_kind.to_string());
        m
    }

    /// Reads a spec from flat keys, filling per-arch defaults for absent keys.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| kv.get(k).map(|s| s.trim());
        let num = |k: &str, default: usize| -> Result<usize> {
            match get(k) {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("{k}: expected an integer, got '{v}'"))),
            }
        };
        let arch: Arch = get("arch").unwrap_or("edsr").parse()?;
        let mut spec = match arch {
            Arch::Edsr => ModelSpec::edsr(16, 64, 2),
            Arch::SelfOnn => ModelSpec::selfonn(8, 64, 3, 2),
            Arch::Hybrid => ModelSpec::hybrid(2),
        };
        spec.num_blocks = num("num_blocks", spec.num_blocks)?;
        let default_sor = match arch {
            Arch::Edsr => 0,
            Arch::SelfOnn => spec.num_blocks,
            Arch::Hybrid => spec.num_sor.min(spec.num_blocks),
        };
        spec.num_sor = num("num_sor", default_sor)?;
        if let Some(p) = get("sor_position") {
            spec.sor_position = p.parse()?;
        }
        spec.channels = num("channels", spec.channels)?;
        spec.q = num("q", spec.q)?;
        spec.scale = num("scale", spec.scale)?;
        if let Some(u) = get("upsampler_kind") {
            spec.upsampler_kind = u.parse()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Names of fields whose values differ, for mismatch diagnostics.
    pub fn diff(&self, other: &ModelSpec) -> Vec<String> {
        let (a, b) = (self.to_kv(), other.to_kv());
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k} ({v} vs {})", b[k]))
            .collect()
    }
}

/// Exact learnable-scalar count, computed from the layer list alone.
pub fn count_params(spec: &ModelSpec) -> Result<usize> {
    Ok(spec.layers()?.iter().map(|(_, l)| l.param_count()).sum())
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<(String, LayerParams)>,
}

/// Outcome of [`Model::load_partial`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Model tensors matched by a skip prefix; they keep their current values.
    pub skipped: Vec<String>,
    /// Skipped tensors the checkpoint does not contain at all.
    pub missing: Vec<String>,
    /// Checkpoint tensors with no counterpart in the model.
    pub unused: Vec<String>,
}

/// `name` lies under `prefix` when equal to it or continuing with a `.`.
pub fn has_prefix(name: &str, prefix: &str) -> bool {
    name == prefix
        || (name.len() > prefix.len() && name.starts_with(prefix) && name.as_bytes()[prefix.len()] == b'.')
}

impl Model {
    pub fn build<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Model> {
        let layers = spec
            .layers()?
            .into_iter()
            .map(|(prefix, l)| (prefix, init_params(&l, rng)))
            .collect();
        Ok(Model {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[(String, LayerParams)] {
        &self.layers
    }

    pub fn layer_mut(&mut self, prefix: &str) -> Option<&mut LayerParams> {
        self.layers
            .iter_mut()
            .find(|(p, _)| p == prefix)
            .map(|(_, l)| l)
    }

    /// `(name, tensor)` for every parameter, in canonical order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(prefix, l)| {
                l.named()
                    .into_iter()
                    .map(move |(suffix, t)| (format!("{prefix}.{suffix}"), t))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|(_, l)| match l {
                LayerParams::Conv(p) => vec![&mut p.kernel, &mut p.bias],
                LayerParams::Sol(p) => {
                    let mut v: Vec<&mut Tensor> = p.kernels.iter_mut().collect();
                    v.push(&mut p.bias);
                    v
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every parameter with `g`, in canonical order.
    pub fn bind<G: Graph>(&self, g: &mut G) -> Vec<LayerParams<G::Value>> {
        self.layers.iter().map(|(_, l)| l.bind(g)).collect()
    }

    /// Feature map after the global skip, just before the upsampler.
    pub fn features<G: Graph>(
        &self,
        g: &mut G,
        bound: &[LayerParams<G::Value>],
        x: &G::Value,
    ) -> Result<G::Value> {
        let shape = g.value(x).shape();
        if shape.c() != 3 {
            return Err(Error::invalid(
                "model_forward",
                format!("expected a 3-channel input, got {shape}"),
            ));
        }
        let head = layer_forward(g, x, &bound[0])?;
        let mut h = head.clone();
        for i in 0..self.spec.num_blocks {
            let (p1, p2) = (&bound[1 + 2 * i], &bound[2 + 2 * i]);
            h = match (p1, p2) {
                (LayerParams::Conv(a), LayerParams::Conv(b)) => res_block_forward(g, &h, a, b)?,
                (LayerParams::Sol(a), LayerParams::Sol(b)) => sor_block_forward(g, &h, a, b)?,
                _ => unreachable!("block layers share a kind"),
            };
        }
        let mid = layer_forward(g, &h, &bound[1 + 2 * self.spec.num_blocks])?;
        g.add(&head, &mid)
    }

    pub fn forward_bound<G: Graph>(
        &self,
        g: &mut G,
        bound: &[LayerParams<G::Value>],
        x: &G::Value,
    ) -> Result<G::Value> {
        let f = self.features(g, bound, x)?;
        let first_stage = 2 + 2 * self.spec.num_blocks;
        let stages = upsampler_stages(self.spec.scale)?;
        let up = upsampler_forward(
            g,
            &f,
            self.spec.scale,
            &bound[first_stage..first_stage + stages],
        )?;
        layer_forward(g, &up, &bound[first_stage + stages])
    }

    pub fn forward<G: Graph>(&self, g: &mut G, x: &G::Value) -> Result<G::Value> {
        let bound = self.bind(g);
        self.forward_bound(g, &bound, x)
    }

    /// Inference without recording a tape.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(&mut Eval, x)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named_params()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        let idx = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Parameter {
                name: name.into(),
                msg: "not a parameter of this model".into(),
            })?;
        let slot = self.params_mut().into_iter().nth(idx).expect("index in range");
        if slot.shape() != value.shape() {
            return Err(Error::Parameter {
                name: name.into(),
                msg: format!("shape {} does not match model shape {}", value.shape(), slot.shape()),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Copies checkpoint tensors into the model, leaving names under any of
    /// `skip_prefixes` untouched.
    ///
    /// Fails without modifying the model if a non-skipped tensor is absent
    /// from the checkpoint or has a different shape.
    pub fn load_partial(&mut self, ckpt: &Checkpoint, skip_prefixes: &[String]) -> Result<LoadReport> {
        let mut report = LoadReport::default();
        let mut updates = Vec::new();
        let model_names: BTreeSet<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, current) in self.named_params() {
            let skipped = skip_prefixes.iter().any(|p| has_prefix(&name, p));
            match (ckpt.tensors.get(&name), skipped) {
                (_, true) => {
                    if !ckpt.tensors.contains_key(&name) {
                        report.missing.push(name.clone());
                    }
                    report.skipped.push(name);
                }
                (None, false) => {
                    return Err(Error::Parameter {
                        name,
                        msg: "missing from checkpoint".into(),
                    })
                }
                (Some(t), false) => {
                    if t.shape() != current.shape() {
                        return Err(Error::Parameter {
                            name,
                            msg: format!(
                                "checkpoint shape {} does not match model shape {}",
                                t.shape(),
                                current.shape()
                            ),
                        });
                    }
                    updates.push((name.clone(), t.clone()));
                    report.loaded.push(name);
                }
            }
        }
        report.unused = ckpt
            .tensors
            .keys()
            .filter(|n| !model_names.contains(*n) && !n.starts_with(crate::train::checkpoint::ADAM_PREFIX))
            .cloned()
            .collect();
        for (name, t) in updates {
            self.set(&name, t)?;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autograd::kernels::{conv2d, pixel_shuffle};
    use crate::tensor::Shape;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn reference_parameter_counts() {
        let cases = [
            (ModelSpec::selfonn(4, 32, 3, 2), 365_059),
            (ModelSpec::selfonn(8, 32, 3, 2), 586_499),
            (ModelSpec::selfonn(4, 64, 3, 2), 1_448_963),
            (ModelSpec::selfonn(8, 64, 3, 2), 2_334_211),
            (ModelSpec::selfonn(8, 64, 3, 4), 2_776_835),
            (ModelSpec::edsr(16, 64, 2), 1_369_859),
            (ModelSpec::hybrid(2), 2_331_779),
        ];
        for (spec, want) in cases {
            assert_eq!(count_params(&spec).unwrap(), want, "{spec:?}");
        }
    }

    #[test]
    fn edsr_naming_contract() {
        let m = Model::build(&ModelSpec::edsr(16, 8, 2), &mut rng(1)).unwrap();
        let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 2 + 16 * 4 + 2 + 2 + 2);
        assert_eq!(names[0], "head.kernel");
        assert_eq!(names[2], "block0.conv1.kernel");
        assert_eq!(names[5], "block0.conv2.bias");
        assert!(names.contains(&"mid.kernel".to_string()));
        assert!(names.contains(&"upsampler.stage0.bias".to_string()));
        assert_eq!(names.last().unwrap(), "tail.bias");
    }

    #[test]
    fn hybrid_last_four_layout() {
        let spec = ModelSpec::hybrid(2);
        let layers = spec.layers().unwrap();
        assert_eq!(layers[0].1.kind, LayerKind::Conv);
        for i in 0..16 {
            let (name, l) = &layers[1 + 2 * i];
            if i >= 12 {
                assert_eq!(name, &format!("block{i}.sol1"));
                assert_eq!(l.kind, LayerKind::Sol { q: 3 });
            } else {
                assert_eq!(name, &format!("block{i}.conv1"));
                assert_eq!(l.kind, LayerKind::Conv);
            }
        }
        for (name, l) in &layers[33..] {
            assert_eq!(l.kind, LayerKind::Sol { q: 3 }, "{name}");
        }
        let mut first = spec.clone();
        first.sor_position = SorPosition::First;
        assert!(first.is_sor_block(0) && first.is_sor_block(3) && !first.is_sor_block(4));
    }

    #[test]
    fn count_matches_built_tensors_over_grid() {
        for arch in ["edsr", "selfonn", "hybrid"] {
            for blocks in [1, 4, 8] {
                for ch in [8, 16] {
                    for scale in [2, 4] {
                        let mut kv = BTreeMap::new();
                        kv.insert("arch".to_string(), arch.to_string());
                        kv.insert("num_blocks".to_string(), blocks.to_string());
                        kv.insert("channels".to_string(), ch.to_string());
                        kv.insert("scale".to_string(), scale.to_string());
                        let spec = ModelSpec::from_kv(&kv).unwrap();
                        let m = Model::build(&spec, &mut rng(2)).unwrap();
                        assert_eq!(m.param_count(), count_params(&spec).unwrap(), "{spec:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn forward_shapes() {
        let m = Model::build(&ModelSpec::edsr(2, 8, 2), &mut rng(3)).unwrap();
        let x = Tensor::zeros(Shape::new(16, 3, 48, 48));
        assert_eq!(m.infer(&x).unwrap().shape(), Shape::new(16, 3, 96, 96));
        let m = Model::build(&ModelSpec::selfonn(1, 8, 3, 4), &mut rng(3)).unwrap();
        let x = Tensor::zeros(Shape::new(1, 3, 48, 48));
        assert_eq!(m.infer(&x).unwrap().shape(), Shape::new(1, 3, 192, 192));
        assert!(m.infer(&Tensor::zeros(Shape::new(1, 4, 8, 8))).is_err());
    }

    #[test]
    fn zero_edsr_outputs_zero() {
        let mut m = Model::build(&ModelSpec::edsr(3, 8, 2), &mut rng(4)).unwrap();
        for p in m.params_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Tensor::uniform(Shape::new(2, 3, 6, 6), 0.0, 1.0, &mut rng(5));
        assert!(m.infer(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Model::build(&ModelSpec::selfonn(2, 8, 3, 2), &mut rng(6)).unwrap();
        let x = Tensor::uniform(Shape::new(2, 3, 7, 9), -0.5, 0.5, &mut rng(7));
        assert_eq!(m.infer(&x).unwrap(), m.infer(&x).unwrap());
    }

    fn conv_of(p: &LayerParams) -> (&Tensor, &Tensor) {
        match p {
            LayerParams::Conv(c) => (&c.kernel, &c.bias),
            LayerParams::Sol(s) => {
                assert_eq!(s.q(), 1);
                (&s.kernels[0], &s.bias)
            }
        }
    }

    /// Hand-wired conv network with tanh SOR-style blocks, reading the
    /// weights of a q = 1 model.
    fn tanh_conv_reference(m: &Model, x: &Tensor) -> Tensor {
        let l = m.layers();
        let conv = |i: usize, x: &Tensor| {
            let (k, b) = conv_of(&l[i].1);
            conv2d(x, k, Some(b)).unwrap()
        };
        let head = conv(0, x);
        let mut h = head.clone();
        for i in 0..m.spec().num_blocks {
            let r = conv(1 + 2 * i, &h).map(f32::tanh);
            let r = conv(2 + 2 * i, &r);
            h = h.zip_map(&r, "add", |a, b| (a + b).tanh()).unwrap();
        }
        let first = 1 + 2 * m.spec().num_blocks;
        let mid = conv(first, &h);
        let mut f = head.zip_map(&mid, "add", |a, b| a + b).unwrap();
        let stages = upsampler_stages(m.spec().scale).unwrap();
        for j in 0..stages {
            f = pixel_shuffle(&conv(first + 1 + j, &f), 2).unwrap();
        }
        conv(first + 1 + stages, &f)
    }

    #[test]
    fn selfonn_q1_is_tanh_conv_network() {
        for scale in [2, 4] {
            let m = Model::build(&ModelSpec::selfonn(3, 8, 1, scale), &mut rng(8)).unwrap();
            let x = Tensor::uniform(Shape::new(2, 3, 6, 5), -0.5, 0.5, &mut rng(9));
            let diff = m.infer(&x).unwrap().max_abs_diff(&tanh_conv_reference(&m, &x)).unwrap();
            assert!(diff <= 1e-5, "{diff}");
        }
    }

    #[test]
    fn edsr_global_skip_wiring() {
        let mut m = Model::build(&ModelSpec::edsr(2, 4, 2), &mut rng(10)).unwrap();
        for (name, l) in m.layers.iter_mut() {
            if name.starts_with("block") {
                if let LayerParams::Conv(p) = l {
                    p.kernel.data_mut().fill(0.0);
                    p.bias.data_mut().fill(0.0);
                }
            }
        }
        let x = Tensor::uniform(Shape::new(1, 3, 5, 5), 0.0, 1.0, &mut rng(11));
        let (hk, hb) = conv_of(&m.layers()[0].1);
        let head = conv2d(&x, hk, Some(hb)).unwrap();
        let (mk, mb) = conv_of(&m.layers()[5].1);
        let mid = conv2d(&head, mk, Some(mb)).unwrap();
        let want = head.zip_map(&mid, "add", |a, b| a + b).unwrap();
        let bound = m.bind(&mut Eval);
        let got = m.features(&mut Eval, &bound, &x).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-6);
    }

    fn checkpoint_of(m: &Model) -> Checkpoint {
        Checkpoint {
            meta: BTreeMap::new(),
            tensors: m
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    #[test]
    fn load_partial_pre_t() {
        let src = Model::build(&ModelSpec::selfonn(2, 8, 3, 2), &mut rng(12)).unwrap();
        let fresh = Model::build(&ModelSpec::selfonn(2, 8, 3, 4), &mut rng(13)).unwrap();
        let mut dst = fresh.clone();
        let report = dst
            .load_partial(&checkpoint_of(&src), &["upsampler".to_string()])
            .unwrap();
        for (name, t) in dst.named_params() {
            if has_prefix(&name, "upsampler") {
                assert_eq!(t, fresh.get(&name).unwrap(), "{name}");
            } else {
                assert_eq!(t, src.get(&name).unwrap(), "{name}");
            }
        }
        assert!(report.skipped.iter().all(|n| n.starts_with("upsampler.stage")));
        let missing = ["kernel1", "kernel2", "kernel3", "bias"].map(|s| format!("upsampler.stage1.{s}"));
        assert_eq!(report.missing, missing);
        assert_eq!(report.loaded.len() + report.skipped.len(), dst.named_params().len());
    }

    #[test]
    fn load_partial_same_spec_copies_everything() {
        let src = Model::build(&ModelSpec::edsr(2, 4, 2), &mut rng(14)).unwrap();
        let mut dst = Model::build(&ModelSpec::edsr(2, 4, 2), &mut rng(15)).unwrap();
        let r = dst.load_partial(&checkpoint_of(&src), &[]).unwrap();
        assert!(r.skipped.is_empty() && r.unused.is_empty());
        assert_eq!(dst.named_params(), src.named_params());
    }

    #[test]
    fn load_partial_errors_leave_model_untouched() {
        let src = Model::build(&ModelSpec::edsr(2, 4, 2), &mut rng(16)).unwrap();
        let mut ckpt = checkpoint_of(&src);
        ckpt.tensors.remove("block1.conv2.kernel");
        let mut dst = Model::build(&ModelSpec::edsr(2, 4, 2), &mut rng(17)).unwrap();
        let before = dst.clone();
        let err = dst.load_partial(&ckpt, &[]).unwrap_err().to_string();
        assert!(err.contains("block1.conv2.kernel"), "{err}");
        assert_eq!(dst.named_params(), before.named_params());

        let mut ckpt = checkpoint_of(&src);
        ckpt.tensors.insert("tail.bias".into(), Tensor::zeros(Shape::new(1, 4, 1, 1)));
        let err = dst.load_partial(&ckpt, &[]).unwrap_err().to_string();
        assert!(err.contains("tail.bias"), "{err}");
        assert_eq!(dst.named_params(), before.named_params());
    }

    #[test]
    fn prefix_matching_respects_components() {
        assert!(has_prefix("upsampler.stage0.bias", "upsampler"));
        assert!(has_prefix("block1.conv1.kernel", "block1"));
        assert!(!has_prefix("block10.conv1.kernel", "block1"));
        assert!(has_prefix("tail", "tail"));
    }

    #[test]
    fn spec_validation_and_kv() {
        let mut s = ModelSpec::edsr(4, 8, 2);
        s.num_sor = 1;
        assert!(s.validate().is_err());
        assert!(ModelSpec::selfonn(4, 8, 3, 3).validate().is_err());
        let mut h = ModelSpec::hybrid(2);
        h.num_sor = 17;
        assert!(h.validate().is_err());
        let spec = ModelSpec::hybrid(4);
        assert_eq!(ModelSpec::from_kv(&spec.to_kv()).unwrap(), spec);
        let mut kv = BTreeMap::new();
        kv.insert("arch".to_string(), "resnet".to_string());
        assert!(ModelSpec::from_kv(&kv).is_err());
        let d = ModelSpec::hybrid(2).diff(&ModelSpec::hybrid(4));
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with("scale"));
    }
}
