use rand::Rng;

use super::ops::{dense_backward, dense_forward, relu_inplace, relu_mask, Conv, Pool};
use super::params::{Param, ParamStore};
use super::Real;
use crate::encode::{PhaseMatrix, StateTensor};
use crate::error::{Error, Result};

pub const CONV1_MAPS: usize = 32;
pub const CONV1_KERNEL: usize = 5;
pub const CONV2_MAPS: usize = 64;
pub const CONV2_KERNEL: usize = 3;
pub const FC_UNITS: usize = 500;
pub const EMBED_UNITS: usize = 32;

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const EMBED_W: usize = 4;
const EMBED_B: usize = 5;
const FC_W: usize = 6;
const FC_B: usize = 7;
const OUT_W: usize = 8;
const OUT_B: usize = 9;

/// How the intersection axis of the state tensor meets the conv stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMode {
    /// Slices are the input channels of conv1.
    #[default]
    Channels,
    /// Every slice runs through the same single-channel conv stack and the
    /// features are concatenated.
    Slices,
}

impl ConvMode {
    pub fn code(self) -> u8 {
        match self {
            ConvMode::Channels => 0,
            ConvMode::Slices => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ConvMode::Channels),
            1 => Ok(ConvMode::Slices),
            _ => Err(Error::Config(format!("unknown conv mode {code}"))),
        }
    }
}

impl std::fmt::Display for ConvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConvMode::Channels => "channels",
            ConvMode::Slices => "slices",
        })
    }
}

impl std::str::FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channels" => Ok(ConvMode::Channels),
            "slices" => Ok(ConvMode::Slices),
            _ => Err(Error::Config(format!("unknown conv mode '{s}' (channels, slices)"))),
        }
    }
}

/// Input dimensions of the network. Everything else is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub intersections: usize,
    pub lanes: usize,
    pub cells: usize,
    pub phases: usize,
    pub conv: ConvMode,
}

impl NetShape {
    pub fn new(intersections: usize, lanes: usize, cells: usize, phases: usize) -> Result<Self> {
        let shape = Self {
            intersections,
            lanes,
            cells,
            phases,
            conv: ConvMode::Channels,
        };
        let p2 = shape.pool2();
        if intersections == 0 || phases == 0 || lanes < CONV1_KERNEL || cells < CONV1_KERNEL {
            return Err(Error::Config(format!("network input too small: {shape:?}")));
        }
        let p1 = shape.pool1();
        if p1.out_h() < CONV2_KERNEL || p1.out_w() < CONV2_KERNEL || p2.out_h() == 0 || p2.out_w() == 0 {
            return Err(Error::Config(format!(
                "input {}x{} does not survive the conv/pool stack",
                lanes, cells
            )));
        }
        Ok(shape)
    }

    pub fn with_conv(self, conv: ConvMode) -> Self {
        Self { conv, ..self }
    }

    /// Number of passes through the conv stack per input.
    fn towers(&self) -> usize {
        match self.conv {
            ConvMode::Channels => 1,
            ConvMode::Slices => self.intersections,
        }
    }

    fn in_channels(&self) -> usize {
        self.intersections / self.towers()
    }

    fn conv1(&self) -> Conv {
        Conv {
            in_ch: self.in_channels(),
            out_ch: CONV1_MAPS,
            kh: CONV1_KERNEL,
            kw: CONV1_KERNEL,
            h: self.lanes,
            w: self.cells,
        }
    }

    fn pool1(&self) -> Pool {
        let c = self.conv1();
        Pool {
            ch: CONV1_MAPS,
            ph: 1,
            pw: 2,
            h: c.h.saturating_sub(c.kh - 1),
            w: c.w.saturating_sub(c.kw - 1),
        }
    }

    fn conv2(&self) -> Conv {
        let p = self.pool1();
        Conv {
            in_ch: CONV1_MAPS,
            out_ch: CONV2_MAPS,
            kh: CONV2_KERNEL,
            kw: CONV2_KERNEL,
            h: p.out_h(),
            w: p.out_w(),
        }
    }

    fn pool2(&self) -> Pool {
        let c = self.conv2();
        Pool {
            ch: CONV2_MAPS,
            ph: 2,
            pw: 2,
            h: c.h.saturating_sub(c.kh - 1),
            w: c.w.saturating_sub(c.kw - 1),
        }
    }

    /// Spatial extents after each stage: conv1, pool1, conv2, pool2.
    pub fn stage_extents(&self) -> [(usize, usize); 4] {
        let (c1, p1, c2, p2) = (self.conv1(), self.pool1(), self.conv2(), self.pool2());
        [
            (c1.out_h(), c1.out_w()),
            (p1.out_h(), p1.out_w()),
            (c2.out_h(), c2.out_w()),
            (p2.out_h(), p2.out_w()),
        ]
    }

    /// Pooled conv features of one tower.
    fn tower_features(&self) -> usize {
        let p = self.pool2();
        CONV2_MAPS * p.out_h() * p.out_w()
    }

    pub fn flat_features(&self) -> usize {
        self.towers() * self.tower_features()
    }

    pub fn phase_inputs(&self) -> usize {
        self.intersections * self.phases
    }

    /// I policy logits plus one value.
    pub fn outputs(&self) -> usize {
        self.intersections + 1
    }

    fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let fc_in = self.flat_features() + EMBED_UNITS;
        vec![
            ("conv1.w", vec![CONV1_MAPS, self.in_channels(), CONV1_KERNEL, CONV1_KERNEL]),
            ("conv1.b", vec![CONV1_MAPS]),
            ("conv2.w", vec![CONV2_MAPS, CONV1_MAPS, CONV2_KERNEL, CONV2_KERNEL]),
            ("conv2.b", vec![CONV2_MAPS]),
            ("phase_embed.w", vec![EMBED_UNITS, self.phase_inputs()]),
            ("phase_embed.b", vec![EMBED_UNITS]),
            ("fc.w", vec![FC_UNITS, fc_in]),
            ("fc.b", vec![FC_UNITS]),
            ("out.w", vec![self.outputs(), FC_UNITS]),
            ("out.b", vec![self.outputs()]),
        ]
    }
}

/// Policy probabilities and state value for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    x: Vec<T>,
    a1: Vec<T>,
    p1: Vec<T>,
    arg1: Vec<u32>,
    a2: Vec<T>,
    arg2: Vec<u32>,
    h: Vec<T>,
    z: Vec<T>,
    f: Vec<T>,
    probs: Vec<T>,
    pub output: NetOutput,
}

impl<T: Real> Tape<T> {
    /// True when both passes took the same ReLU and max-pool branches, i.e.
    /// the network is one smooth function between the two inputs.
    pub fn same_pattern(&self, other: &Tape<T>) -> bool {
        let on = |a: &[T], b: &[T]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (*x > T::zero()) == (*y > T::zero()));
        self.arg1 == other.arg1
            && self.arg2 == other.arg2
            && on(&self.a1, &other.a1)
            && on(&self.a2, &other.a2)
            && on(&self.z, &other.z)
            && on(&self.f, &other.f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    shape: NetShape,
    pub params: ParamStore<T>,
}

impl<T: Real> Network<T> {
    /// All weights and biases zero.
    pub fn zeros(shape: NetShape) -> Self {
        let params = shape
            .layout()
            .iter()
            .map(|(name, dims)| Param::zeros(name, dims))
            .collect();
        Self {
            shape,
            params: ParamStore::new(params),
        }
    }

    /// He-uniform for ReLU layers, Xavier-uniform for the output head,
    /// zero biases.
    pub fn init<R: Rng>(shape: NetShape, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        let fc_in = shape.flat_features() + EMBED_UNITS;
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let fans = [
            (CONV1_W, he(shape.in_channels() * CONV1_KERNEL * CONV1_KERNEL)),
            (CONV2_W, he(CONV1_MAPS * CONV2_KERNEL * CONV2_KERNEL)),
            (EMBED_W, he(shape.phase_inputs())),
            (FC_W, he(fc_in)),
            (OUT_W, (6.0 / (FC_UNITS + shape.outputs()) as f64).sqrt()),
        ];
        for (idx, bound) in fans {
            net.params.get_mut(idx).fill_uniform(rng, bound);
        }
        net
    }

    /// Rebuilds a network around an existing parameter store.
    pub fn from_params(shape: NetShape, params: ParamStore<T>) -> Result<Self> {
        let layout = shape.layout();
        if layout.len() != params.len()
            || layout
                .iter()
                .zip(params.iter())
                .any(|((name, dims), p)| *name != p.name || *dims != p.dims)
        {
            return Err(Error::Shape {
                expected: format!("{layout:?}"),
                actual: format!("{:?}", params.iter().map(|p| (&p.name, &p.dims)).collect::<Vec<_>>()),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            shape: self.shape,
            params: self.params.cast(),
        }
    }

    fn check_inputs(&self, s: &StateTensor, h: &PhaseMatrix) -> Result<()> {
        let sh = self.shape;
        let want_s = (sh.intersections, sh.lanes, sh.cells);
        if s.dims() != want_s {
            return Err(Error::Shape {
                expected: format!("state {want_s:?}"),
                actual: format!("state {:?}", s.dims()),
            });
        }
        if h.dims() != (sh.intersections, sh.phases) {
            return Err(Error::Shape {
                expected: format!("phase matrix {:?}", (sh.intersections, sh.phases)),
                actual: format!("phase matrix {:?}", h.dims()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, s: &StateTensor, h: &PhaseMatrix) -> Result<NetOutput> {
        Ok(self.forward_tape(s, h)?.output)
    }

    pub fn forward_tape(&self, s: &StateTensor, h: &PhaseMatrix) -> Result<Tape<T>> {
        self.check_inputs(s, h)?;
        let sh = self.shape;
        let p = &self.params;
        let (c1, p1, c2, p2) = (sh.conv1(), sh.pool1(), sh.conv2(), sh.pool2());

        let mut x = vec![T::zero(); s.len()];
        for idx in s.ones() {
            x[idx] = T::one();
        }
        let towers = sh.towers();
        let tf = sh.tower_features();
        let flat = sh.flat_features();
        let mut a1 = vec![T::zero(); towers * CONV1_MAPS * c1.out_h() * c1.out_w()];
        let mut pool1 = vec![T::zero(); towers * CONV1_MAPS * p1.out_h() * p1.out_w()];
        let mut arg1 = vec![0u32; pool1.len()];
        let mut a2 = vec![T::zero(); towers * CONV2_MAPS * c2.out_h() * c2.out_w()];
        let mut z = vec![T::zero(); flat + EMBED_UNITS];
        let mut arg2 = vec![0u32; flat];
        let (nx, n1, np, n2) = (x.len() / towers, a1.len() / towers, pool1.len() / towers, a2.len() / towers);
        for t in 0..towers {
            let a1 = &mut a1[t * n1..][..n1];
            c1.forward(&x[t * nx..][..nx], &p.get(CONV1_W).value, &p.get(CONV1_B).value, a1);
            relu_inplace(a1);
            let pool1 = &mut pool1[t * np..][..np];
            p1.forward(a1, pool1, &mut arg1[t * np..][..np]);
            let a2 = &mut a2[t * n2..][..n2];
            c2.forward(pool1, &p.get(CONV2_W).value, &p.get(CONV2_B).value, a2);
            relu_inplace(a2);
            p2.forward(a2, &mut z[t * tf..][..tf], &mut arg2[t * tf..][..tf]);
        }

        let hv: Vec<T> = h.iter().map(|b| if b { T::one() } else { T::zero() }).collect();
        dense_forward(&p.get(EMBED_W).value, &p.get(EMBED_B).value, &hv, &mut z[flat..]);
        relu_inplace(&mut z[flat..]);

        let mut f = vec![T::zero(); FC_UNITS];
        dense_forward(&p.get(FC_W).value, &p.get(FC_B).value, &z, &mut f);
        relu_inplace(&mut f);

        let mut o = vec![T::zero(); sh.outputs()];
        dense_forward(&p.get(OUT_W).value, &p.get(OUT_B).value, &f, &mut o);

        let ni = sh.intersections;
        let probs: Vec<T> = o[..ni]
            .iter()
            .map(|&l| T::one() / (T::one() + (-l).exp()))
            .collect();
        let output = NetOutput {
            probs: probs.iter().map(|p| p.as_f64()).collect(),
            value: o[ni].as_f64(),
        };
        Ok(Tape {
            x,
            a1,
            p1: pool1,
            arg1,
            a2,
            arg2,
            h: hv,
            z,
            f,
            probs,
            output,
        })
    }

    /// Accumulates parameter gradients of a scalar loss given its partial
    /// derivatives with respect to the sigmoid outputs and the value.
    pub fn backward(&mut self, tape: &Tape<T>, d_probs: &[f64], d_value: f64) -> Result<()> {
        let sh = self.shape;
        let ni = sh.intersections;
        if d_probs.len() != ni {
            return Err(Error::Shape {
                expected: format!("{ni} probability gradients"),
                actual: d_probs.len().to_string(),
            });
        }
        let (c1, c2) = (sh.conv1(), sh.conv2());
        let flat = sh.flat_features();

        let mut d_o: Vec<T> = tape
            .probs
            .iter()
            .zip(d_probs)
            .map(|(&p, &g)| T::of(g) * p * (T::one() - p))
            .collect();
        d_o.push(T::of(d_value));

        let mut d_f = vec![T::zero(); FC_UNITS];
        {
            let (w, gw, gb) = layer(&mut self.params, OUT_W);
            dense_backward(w, &tape.f, &d_o, gw, gb, Some(&mut d_f));
        }
        relu_mask(&tape.f, &mut d_f);

        let mut d_z = vec![T::zero(); tape.z.len()];
        {
            let (w, gw, gb) = layer(&mut self.params, FC_W);
            dense_backward(w, &tape.z, &d_f, gw, gb, Some(&mut d_z));
        }
        let (d_flat, d_e) = d_z.split_at_mut(flat);
        relu_mask(&tape.z[flat..], d_e);
        {
            let (w, gw, gb) = layer(&mut self.params, EMBED_W);
            dense_backward(w, &tape.h, d_e, gw, gb, None);
        }

        let towers = sh.towers();
        let tf = sh.tower_features();
        let (n1, np, n2) = (tape.a1.len() / towers, tape.p1.len() / towers, tape.a2.len() / towers);
        let nx = tape.x.len() / towers;
        for t in 0..towers {
            let mut d_a2 = vec![T::zero(); n2];
            Pool::backward(&d_flat[t * tf..][..tf], &tape.arg2[t * tf..][..tf], &mut d_a2);
            relu_mask(&tape.a2[t * n2..][..n2], &mut d_a2);

            let mut d_p1 = vec![T::zero(); np];
            {
                let (w, gw, gb) = layer(&mut self.params, CONV2_W);
                c2.backward(&tape.p1[t * np..][..np], w, &d_a2, gw, gb, Some(&mut d_p1));
            }

            let mut d_a1 = vec![T::zero(); n1];
            Pool::backward(&d_p1, &tape.arg1[t * np..][..np], &mut d_a1);
            relu_mask(&tape.a1[t * n1..][..n1], &mut d_a1);
            let (w, gw, gb) = layer(&mut self.params, CONV1_W);
            c1.backward(&tape.x[t * nx..][..nx], w, &d_a1, gw, gb, None);
        }
        Ok(())
    }
}

/// Weight values and the weight/bias gradient buffers of the layer whose
/// weight array sits at `w_idx` (bias right after it).
fn layer<T: Real>(params: &mut ParamStore<T>, w_idx: usize) -> (&[T], &mut [T], &mut [T]) {
    let mut iter = params.iter_mut().skip(w_idx);
    let w = iter.next().expect("weight array");
    let b = iter.next().expect("bias array");
    (&w.value, &mut w.grad, &mut b.grad)
}
