//! Cell templates and the forward/backward pass over a selection of cells.
//!
//! A stand-alone network and a supernet view run the exact same code here:
//! both hand over a stem, one slice of cells per group, and the classifier.

use rand::Rng;
use sha2::{Digest, Sha256};

use super::layers::{self, BatchNorm, BnCache, Conv3x3, Linear, Param};
use super::scalar::Scalar;
use super::spec::{CellKind, SearchSpaceSpec};
use super::tensor::Tensor;
use crate::error::{LasError, Result};

/// Convolution followed by batch normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBn<T> {
    pub conv: Conv3x3<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn new<R: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        ConvBn {
            conv: Conv3x3::new(cin, cout, stride, rng),
            bn: BatchNorm::new(cout),
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Option<BnCache<T>>) {
        let h = self.conv.forward(x);
        if train {
            let (y, c) = self.bn.forward_train(&h);
            (y, Some(c))
        } else {
            (self.bn.forward_eval(&h), None)
        }
    }

    fn backward(&mut self, x: &Tensor<T>, cache: &BnCache<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let dh = self.bn.backward(cache, dy);
        self.conv.backward(x, &dh, need_dx)
    }

    fn params_mut(&mut self) -> [&mut Param<T>; 3] {
        [&mut self.conv.weight, &mut self.bn.gamma, &mut self.bn.beta]
    }

    fn params(&self) -> [&Param<T>; 3] {
        [&self.conv.weight, &self.bn.gamma, &self.bn.beta]
    }
}

/// One layer of a group, as counted by a layer assignment.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell<T> {
    Plain(ConvBn<T>),
    Residual { first: ConvBn<T>, second: ConvBn<T> },
}

impl<T: Scalar> Cell<T> {
    pub fn new<R: Rng>(spec: &SearchSpaceSpec, group: usize, pos: usize, rng: &mut R) -> Self {
        let (cin, cout, stride) = cell_io(spec, group, pos);
        match spec.cell_kind {
            CellKind::Plain => Cell::Plain(ConvBn::new(cin, cout, stride, rng)),
            CellKind::Residual => Cell::Residual {
                first: ConvBn::new(cin, cout, stride, rng),
                second: ConvBn::new(cout, cout, 1, rng),
            },
        }
    }

    pub fn for_each_param<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        match self {
            Cell::Plain(cb) => cb.params().into_iter().for_each(f),
            Cell::Residual { first, second } => {
                first.params().into_iter().for_each(&mut *f);
                second.params().into_iter().for_each(f);
            }
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match self {
            Cell::Plain(cb) => cb.params_mut().into_iter().for_each(f),
            Cell::Residual { first, second } => {
                first.params_mut().into_iter().for_each(&mut *f);
                second.params_mut().into_iter().for_each(f);
            }
        }
    }

    pub fn batch_norms(&self) -> Vec<&BatchNorm<T>> {
        match self {
            Cell::Plain(cb) => vec![&cb.bn],
            Cell::Residual { first, second } => vec![&first.bn, &second.bn],
        }
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm<T>> {
        match self {
            Cell::Plain(cb) => vec![&mut cb.bn],
            Cell::Residual { first, second } => vec![&mut first.bn, &mut second.bn],
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Option<CellCache<T>>) {
        match self {
            Cell::Plain(cb) => {
                let (mut y, bn) = cb.forward(x, train);
                layers::relu_inplace(&mut y);
                let cache = bn.map(|bn| CellCache::Plain {
                    input: x.clone(),
                    bn,
                    output: y.clone(),
                });
                (y, cache)
            }
            Cell::Residual { first, second } => {
                let (mut r1, bn1) = first.forward(x, train);
                layers::relu_inplace(&mut r1);
                let (mut y, bn2) = second.forward(&r1, train);
                let short = layers::shortcut_forward(x, second.conv.cout, first.conv.stride);
                for (o, &s) in y.data_mut().iter_mut().zip(short.data()) {
                    *o += s;
                }
                layers::relu_inplace(&mut y);
                let cache = match (bn1, bn2) {
                    (Some(bn1), Some(bn2)) => Some(CellCache::Residual {
                        input: x.clone(),
                        bn1,
                        mid: r1,
                        bn2,
                        output: y.clone(),
                    }),
                    _ => None,
                };
                (y, cache)
            }
        }
    }

    fn backward(&mut self, cache: &CellCache<T>, mut dy: Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        match (self, cache) {
            (Cell::Plain(cb), CellCache::Plain { input, bn, output }) => {
                layers::relu_backward_inplace(output, &mut dy);
                cb.backward(input, bn, &dy, need_dx)
            }
            (
                Cell::Residual { first, second },
                CellCache::Residual {
                    input,
                    bn1,
                    mid,
                    bn2,
                    output,
                },
            ) => {
                layers::relu_backward_inplace(output, &mut dy);
                let mut dmid = second
                    .backward(mid, bn2, &dy, true)
                    .expect("input gradient requested");
                layers::relu_backward_inplace(mid, &mut dmid);
                let dx = first.backward(input, bn1, &dmid, need_dx);
                dx.map(|mut dx| {
                    let ds = layers::shortcut_backward(input.shape(), &dy, first.conv.stride);
                    for (o, &s) in dx.data_mut().iter_mut().zip(ds.data()) {
                        *o += s;
                    }
                    dx
                })
            }
            _ => unreachable!("cell cache does not match cell kind"),
        }
    }
}

/// Input channels, output channels and stride of cell `pos` in `group`.
pub fn cell_io(spec: &SearchSpaceSpec, group: usize, pos: usize) -> (usize, usize, usize) {
    let cout = spec.channel_plan[group];
    if pos > 0 {
        return (cout, cout, 1);
    }
    match spec.cell_kind {
        CellKind::Plain => {
            let cin = if group == 0 {
                spec.input_shape[0]
            } else {
                spec.channel_plan[group - 1]
            };
            (cin, cout, 1)
        }
        CellKind::Residual => {
            if group == 0 {
                (spec.channel_plan[0], cout, 1)
            } else {
                (spec.channel_plan[group - 1], cout, 2)
            }
        }
    }
}

/// Width of the feature vector entering the classifier.
pub fn head_features(spec: &SearchSpaceSpec) -> usize {
    let c = *spec.channel_plan.last().expect("validated spec");
    match spec.cell_kind {
        CellKind::Plain => {
            let [_, h, w] = spec.input_shape;
            let f = 1usize << spec.groups;
            c * (h / f) * (w / f)
        }
        CellKind::Residual => c,
    }
}

/// Multiply-accumulates of conv and FC layers for one sample.
pub fn forward_macs(spec: &SearchSpaceSpec, assignment: &[usize]) -> u64 {
    let [cin0, mut h, mut w] = spec.input_shape;
    let mut macs = 0u64;
    let conv = |cin: usize, cout: usize, stride: usize, h: usize, w: usize| {
        let (ho, wo) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
        ((ho * wo * cout * cin * 9) as u64, ho, wo)
    };
    if spec.cell_kind == CellKind::Residual {
        macs += conv(cin0, spec.channel_plan[0], 1, h, w).0;
    }
    for (g, &a) in assignment.iter().enumerate() {
        for pos in 0..a {
            let (cin, cout, stride) = cell_io(spec, g, pos);
            let (m, ho, wo) = conv(cin, cout, stride, h, w);
            macs += m;
            if spec.cell_kind == CellKind::Residual {
                macs += conv(cout, cout, 1, ho, wo).0;
            }
            h = ho;
            w = wo;
        }
        if spec.cell_kind == CellKind::Plain {
            h /= 2;
            w /= 2;
        }
    }
    let mut fin = head_features(spec);
    for &out in &spec.classifier_plan {
        macs += (fin * out) as u64;
        fin = out;
    }
    macs
}

/// Every parameter of a network or supernet, stored per group slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub stem: Option<ConvBn<T>>,
    pub groups: Vec<Vec<Cell<T>>>,
    pub classifier: Vec<Linear<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Initialise `group_sizes[i]` cells for group `i`, drawing in declaration order.
    pub fn init<R: Rng>(spec: &SearchSpaceSpec, group_sizes: &[usize], rng: &mut R) -> Self {
        let stem = (spec.cell_kind == CellKind::Residual)
            .then(|| ConvBn::new(spec.input_shape[0], spec.channel_plan[0], 1, rng));
        let groups = group_sizes
            .iter()
            .enumerate()
            .map(|(g, &size)| (0..size).map(|pos| Cell::new(spec, g, pos, rng)).collect())
            .collect();
        let mut fin = head_features(spec);
        let classifier = spec
            .classifier_plan
            .iter()
            .map(|&out| {
                let l = Linear::new(fin, out, rng);
                fin = out;
                l
            })
            .collect();
        ModelParams {
            stem,
            groups,
            classifier,
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Shared view over the stem, the first `prefix[i]` cells of each group, and the head.
    pub fn layers<'a>(&'a self, spec: &'a SearchSpaceSpec, prefix: &[usize]) -> Layers<'a, T> {
        Layers {
            spec,
            stem: self.stem.as_ref(),
            groups: self
                .groups
                .iter()
                .zip(prefix)
                .map(|(g, &a)| &g[..a])
                .collect(),
            classifier: &self.classifier,
        }
    }

    pub fn layers_mut<'a>(&'a mut self, spec: &'a SearchSpaceSpec, prefix: &[usize]) -> LayersMut<'a, T> {
        LayersMut {
            spec,
            stem: self.stem.as_mut(),
            groups: self
                .groups
                .iter_mut()
                .zip(prefix)
                .map(|(g, &a)| &mut g[..a])
                .collect(),
            classifier: &mut self.classifier,
        }
    }
}

/// Borrowed selection of cells forming one concrete network.
pub struct Layers<'a, T> {
    pub spec: &'a SearchSpaceSpec,
    pub stem: Option<&'a ConvBn<T>>,
    pub groups: Vec<&'a [Cell<T>]>,
    pub classifier: &'a [Linear<T>],
}

pub struct LayersMut<'a, T> {
    pub spec: &'a SearchSpaceSpec,
    pub stem: Option<&'a mut ConvBn<T>>,
    pub groups: Vec<&'a mut [Cell<T>]>,
    pub classifier: &'a mut [Linear<T>],
}

enum CellCache<T> {
    Plain {
        input: Tensor<T>,
        bn: BnCache<T>,
        output: Tensor<T>,
    },
    Residual {
        input: Tensor<T>,
        bn1: BnCache<T>,
        mid: Tensor<T>,
        bn2: BnCache<T>,
        output: Tensor<T>,
    },
}

impl<T> CellCache<T> {
    fn bn_caches(&self) -> Vec<&BnCache<T>> {
        match self {
            CellCache::Plain { bn, .. } => vec![bn],
            CellCache::Residual { bn1, bn2, .. } => vec![bn1, bn2],
        }
    }
}

/// Activations recorded by a training-mode forward pass.
pub struct Tape<T> {
    stem: Option<(Tensor<T>, BnCache<T>, Tensor<T>)>,
    cells: Vec<Vec<CellCache<T>>>,
    pools: Vec<([usize; 4], Vec<u32>)>,
    head_shape: [usize; 4],
    /// Input of each classifier layer, and the post-ReLU output of hidden ones.
    fc: Vec<(Tensor<T>, Option<Tensor<T>>)>,
}

impl<T> Tape<T> {
    /// Batch statistics of every BN layer, in declaration order.
    pub fn bn_caches(&self) -> Vec<&BnCache<T>> {
        let mut out = Vec::new();
        if let Some((_, bn, _)) = &self.stem {
            out.push(bn);
        }
        for group in &self.cells {
            for c in group {
                out.extend(c.bn_caches());
            }
        }
        out
    }
}

fn check_finite<T: Scalar>(t: &Tensor<T>, layer: impl FnOnce() -> String) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(LasError::NonFinite { layer: layer() })
    }
}

impl<'a, T: Scalar> Layers<'a, T> {
    /// Forward pass. In training mode BN uses batch statistics and a tape is
    /// returned; in inference mode BN uses running statistics.
    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<(Tensor<T>, Option<Tape<T>>)> {
        let spec = self.spec;
        let [_, c, h, w] = x.shape();
        if [c, h, w] != spec.input_shape {
            return Err(LasError::shape(format!(
                "input sample shape {:?} does not match {:?}",
                [c, h, w],
                spec.input_shape
            )));
        }
        let mut tape = Tape {
            stem: None,
            cells: Vec::with_capacity(self.groups.len()),
            pools: Vec::new(),
            head_shape: [0; 4],
            fc: Vec::with_capacity(self.classifier.len()),
        };
        let mut cur = match self.stem {
            Some(stem) => {
                let (mut y, bn) = stem.forward(x, train);
                layers::relu_inplace(&mut y);
                check_finite(&y, || "stem".into())?;
                if let Some(bn) = bn {
                    tape.stem = Some((x.clone(), bn, y.clone()));
                }
                y
            }
            None => x.clone(),
        };
        for (g, cells) in self.groups.iter().enumerate() {
            let mut caches = Vec::with_capacity(cells.len());
            for (k, cell) in cells.iter().enumerate() {
                let (y, cache) = cell.forward(&cur, train);
                check_finite(&y, || format!("group {} cell {}", g + 1, k + 1))?;
                caches.extend(cache);
                cur = y;
            }
            tape.cells.push(caches);
            if spec.cell_kind == CellKind::Plain {
                let (y, arg) = layers::maxpool2_forward(&cur);
                tape.pools.push((cur.shape(), arg));
                cur = y;
            }
        }
        tape.head_shape = cur.shape();
        let mut feat = match spec.cell_kind {
            CellKind::Plain => cur.reshape_flat(),
            CellKind::Residual => layers::global_avgpool_forward(&cur),
        };
        let last = self.classifier.len() - 1;
        for (i, fc) in self.classifier.iter().enumerate() {
            let mut y = fc.forward(&feat);
            if i < last {
                layers::relu_inplace(&mut y);
            }
            check_finite(&y, || format!("classifier layer {}", i + 1))?;
            let out = (i < last && train).then(|| y.clone());
            if train {
                tape.fc.push((feat, out));
            }
            feat = y;
        }
        Ok((feat, train.then_some(tape)))
    }
}

impl<'a, T: Scalar> LayersMut<'a, T> {
    pub fn as_layers(&self) -> Layers<'_, T> {
        Layers {
            spec: self.spec,
            stem: self.stem.as_deref(),
            groups: self.groups.iter().map(|g| &**g).collect(),
            classifier: self.classifier,
        }
    }

    /// Accumulate parameter gradients for `dlogits` through a recorded tape.
    pub fn backward(&mut self, tape: &Tape<T>, dlogits: Tensor<T>) {
        let spec = self.spec;
        let mut d = dlogits;
        for (i, fc) in self.classifier.iter_mut().enumerate().rev() {
            let (input, out) = &tape.fc[i];
            if let Some(out) = out {
                layers::relu_backward_inplace(out, &mut d);
            }
            d = fc.backward(input, &d, true).expect("input gradient requested");
        }
        d = match spec.cell_kind {
            CellKind::Plain => Tensor::from_vec(tape.head_shape, d.into_data()),
            CellKind::Residual => layers::global_avgpool_backward(tape.head_shape, &d),
        };
        let has_stem = self.stem.is_some();
        for (g, cells) in self.groups.iter_mut().enumerate().rev() {
            if spec.cell_kind == CellKind::Plain {
                let (shape, arg) = &tape.pools[g];
                d = layers::maxpool2_backward(*shape, arg, &d);
            }
            for (k, cell) in cells.iter_mut().enumerate().rev() {
                let first_layer = g == 0 && k == 0 && !has_stem;
                match cell.backward(&tape.cells[g][k], d, !first_layer) {
                    Some(dx) => d = dx,
                    None => return,
                }
            }
        }
        if let (Some(stem), Some((input, bn, out))) = (self.stem.as_deref_mut(), &tape.stem) {
            layers::relu_backward_inplace(out, &mut d);
            stem.backward(input, bn, &d, false);
        }
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm<T>> {
        let mut out = Vec::new();
        if let Some(stem) = self.stem.as_deref_mut() {
            out.push(&mut stem.bn);
        }
        for cells in self.groups.iter_mut() {
            for c in cells.iter_mut() {
                out.extend(c.batch_norms_mut());
            }
        }
        out
    }

    /// Fold a tape's batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, tape: &Tape<T>, momentum: f64) {
        for (bn, cache) in self.batch_norms_mut().into_iter().zip(tape.bn_caches()) {
            bn.update_running(cache, momentum);
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        if let Some(stem) = self.stem.as_deref_mut() {
            stem.params_mut().into_iter().for_each(&mut *f);
        }
        for cells in self.groups.iter_mut() {
            for c in cells.iter_mut() {
                c.for_each_param_mut(f);
            }
        }
        for fc in self.classifier.iter_mut() {
            f(&mut fc.weight);
            f(&mut fc.bias);
        }
    }

    pub fn zero_grad(&mut self) {
        self.for_each_param_mut(&mut |p| p.zero_grad());
    }

    pub fn sgd_step(&mut self, lr: f64, momentum: f64, weight_decay: f64) {
        let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(weight_decay));
        self.for_each_param_mut(&mut |p| p.sgd_nesterov(lr, mu, wd));
    }
}

impl<'a, T: Scalar> Layers<'a, T> {
    pub fn for_each_param(&self, f: &mut dyn FnMut(&'a Param<T>)) {
        if let Some(stem) = self.stem {
            stem.params().into_iter().for_each(&mut *f);
        }
        for cells in &self.groups {
            for c in cells.iter() {
                c.for_each_param(f);
            }
        }
        for fc in self.classifier {
            f(&fc.weight);
            f(&fc.bias);
        }
    }

    pub fn batch_norms(&self) -> Vec<&'a BatchNorm<T>> {
        let mut out = Vec::new();
        if let Some(stem) = self.stem {
            out.push(&stem.bn);
        }
        for cells in &self.groups {
            for c in cells.iter() {
                out.extend(c.batch_norms());
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |p| n += p.len());
        n
    }

    /// SHA-256 over parameter values and BN running statistics.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        self.for_each_param(&mut |p| hash_values(&mut h, &p.value));
        for bn in self.batch_norms() {
            hash_values(&mut h, &bn.running_mean);
            hash_values(&mut h, &bn.running_var);
        }
        h.finalize().into()
    }
}

pub(crate) fn hash_values<T: Scalar>(h: &mut Sha256, values: &[T]) {
    for v in values {
        h.update(v.as_f64().to_bits().to_le_bytes());
    }
}

/// Digest of a single cell's parameters and running statistics.
pub fn cell_digest<T: Scalar>(cell: &Cell<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    cell.for_each_param(&mut |p| hash_values(&mut h, &p.value));
    for bn in cell.batch_norms() {
        hash_values(&mut h, &bn.running_mean);
        hash_values(&mut h, &bn.running_var);
    }
    h.finalize().into()
}
