use crate::adcore::{concat_channels, Real, Tape, Tensor};
use crate::array::Array;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Leaky ReLU with slope 0.2.
    #[default]
    Leaky,
}

impl Activation {
    fn apply<'t, T: Real>(self, x: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Leaky => x.leaky_relu(0.2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            width: 16,
            kernel: 3,
            activation: Activation::Leaky,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.width < 4 || self.kernel % 2 == 0 {
            return Err(Error::Parameter(format!(
                "net config needs depth >= 1, width >= 4, odd kernel; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How the noise map enters a denoiser.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Gated residual fusion block in front of the conv stack.
    #[default]
    Gated,
    /// Image and map concatenated straight into the first conv.
    Concat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array<f32>,
}

enum Init {
    Zero,
    Identity,
    He,
}

/// A conv-stack denoiser over `channels` image channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub name: String,
    pub channels: usize,
    pub config: NetConfig,
    pub fusion: Fusion,
    pub params: Vec<Param>,
}

fn layout(channels: usize, cfg: &NetConfig, fusion: Fusion) -> Vec<(String, Vec<usize>, Init)> {
    let (c, w, k) = (channels, cfg.width, cfg.kernel);
    let mut l = Vec::new();
    let mut conv = |name: &str, cout: usize, cin: usize, k: usize, init: Init| {
        let bias_init = Init::Zero;
        l.push((format!("{name}.w"), vec![cout, cin, k, k], init));
        l.push((format!("{name}.b"), vec![cout], bias_init));
    };
    if fusion == Fusion::Gated {
        conv("nfb.proj", c, c, 1, Init::Identity);
        conv("nfb.gate0", w, 2 * c, k, Init::He);
        conv("nfb.gate1", c, w, k, Init::Zero);
    }
    for i in 0..cfg.depth {
        let cin = match (i, fusion) {
            (0, Fusion::Gated) => c,
            (0, Fusion::Concat) => 2 * c,
            _ => w,
        };
        conv(&format!("body.{i}"), w, cin, k, Init::He);
    }
    conv("head", c, w, k, Init::Zero);
    l
}

impl Denoiser {
    pub fn new(name: &str, channels: usize, config: &NetConfig, fusion: Fusion, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout(channels, config, fusion)
            .into_iter()
            .map(|(pname, shape, init)| {
                let n: usize = shape.iter().product();
                let data: Vec<f32> = match init {
                    Init::Zero => vec![0.0; n],
                    Init::Identity => (0..n).map(|i| if i % (channels + 1) == 0 { 1.0 } else { 0.0 }).collect(),
                    Init::He => {
                        let fan_in: usize = shape[1..].iter().product();
                        let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                        (0..n).map(|_| d.sample(&mut rng) as f32).collect()
                    }
                };
                Param {
                    name: format!("{name}.{pname}"),
                    value: Array::new(shape, data).expect("layout shape"),
                }
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            channels,
            config: *config,
            fusion,
            params,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let l = layout(self.channels, &self.config, self.fusion);
        if l.len() != self.params.len() {
            return Err(Error::Data(format!(
                "{}: expected {} tensors, found {}",
                self.name,
                l.len(),
                self.params.len()
            )));
        }
        for ((lname, shape, _), p) in l.iter().zip(&self.params) {
            let want = format!("{}.{lname}", self.name);
            if p.name != want || p.value.shape() != shape.as_slice() {
                return Err(Error::Data(format!(
                    "tensor {} {:?} does not match layout {want} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            if p.value.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor {} holds non-finite weights", p.name)));
            }
        }
        Ok(())
    }

    /// Zero the output head so the net starts as the identity.
    pub fn zero_head(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.name.contains(".head.")) {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn arrays<T: Real>(&self) -> Vec<Array<T>> {
        self.params.iter().map(|p| p.value.map(|v| T::from_f64(v as f64))).collect()
    }

    pub fn bind<'t, T: Real>(&self, tape: &'t Tape<T>, trainable: bool) -> BoundNet<'t, T> {
        let tensors = self
            .arrays::<T>()
            .iter()
            .map(|a| if trainable { tape.param(a) } else { tape.constant(a) })
            .collect();
        self.bound(tensors)
    }

    pub fn bind_tensors<'t, T: Real>(&self, tensors: &[Tensor<'t, T>]) -> Result<BoundNet<'t, T>> {
        for (t, p) in tensors.iter().zip(&self.params) {
            if t.shape() != p.value.shape() {
                return Err(Error::Dimension(format!(
                    "{}: tensor shape {:?} does not match {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
        }
        if tensors.len() != self.params.len() {
            return Err(Error::Dimension(format!("{}: wrong tensor count", self.name)));
        }
        Ok(self.bound(tensors.to_vec()))
    }

    fn bound<'t, T: Real>(&self, tensors: Vec<Tensor<'t, T>>) -> BoundNet<'t, T> {
        BoundNet {
            tensors,
            channels: self.channels,
            config: self.config,
            fusion: self.fusion,
        }
    }
}

/// A denoiser whose weights live on a tape.
pub struct BoundNet<'t, T: Real> {
    pub tensors: Vec<Tensor<'t, T>>,
    pub channels: usize,
    pub config: NetConfig,
    pub fusion: Fusion,
}

/// Gated fusion: proj(x)·(1 + g) with g = 2σ(z) − 1 ∈ (−1, 1) and
/// z = conv(act(conv([x, nmap]))). `w` holds proj, gate0 and gate1 weights
/// and biases in that order.
pub fn nfb_fuse<'t, T: Real>(
    x: Tensor<'t, T>,
    nmap: Tensor<'t, T>,
    w: &[Tensor<'t, T>],
    act: Activation,
) -> Result<Tensor<'t, T>> {
    if w.len() != 6 {
        return Err(Error::Dimension(format!("fusion block takes 6 tensors, got {}", w.len())));
    }
    let (xn, _, xh, xw) = x.nchw()?;
    let (mn, _, mh, mw) = nmap.nchw()?;
    if (xn, xh, xw) != (mn, mh, mw) {
        return Err(Error::Dimension(format!(
            "noise map {:?} is not aligned with input {:?}",
            nmap.shape(),
            x.shape()
        )));
    }
    let pad = w[2].shape()[2] / 2;
    let proj = x.conv2d(w[0], Some(w[1]), 1, 0)?;
    let hidden = act.apply(concat_channels(&[x, nmap])?.conv2d(w[2], Some(w[3]), 1, pad)?)?;
    let z = hidden.conv2d(w[4], Some(w[5]), 1, pad)?;
    let gate = z.sigmoid()?.mul_scalar(2.0)?.add_scalar(-1.0)?;
    proj.add(proj.mul(gate)?)
}

impl<'t, T: Real> BoundNet<'t, T> {
    /// Fusion → conv stack → head, plus the long skip from `x`.
    pub fn forward(&self, x: Tensor<'t, T>, nmap: Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        let (_, c, _, _) = x.nchw()?;
        if c != self.channels || nmap.nchw()?.1 != self.channels {
            return Err(Error::Dimension(format!(
                "denoiser over {} channels got input {:?} and map {:?}",
                self.channels,
                x.shape(),
                nmap.shape()
            )));
        }
        let pad = self.config.kernel / 2;
        let act = self.config.activation;
        let (mut h, mut i) = match self.fusion {
            Fusion::Gated => (nfb_fuse(x, nmap, &self.tensors[..6], act)?, 6),
            Fusion::Concat => {
                if x.shape()[2..] != nmap.shape()[2..] || x.shape()[0] != nmap.shape()[0] {
                    return Err(Error::Dimension("noise map is not aligned with input".into()));
                }
                (concat_channels(&[x, nmap])?, 0)
            }
        };
        for _ in 0..self.config.depth {
            h = act.apply(h.conv2d(self.tensors[i], Some(self.tensors[i + 1]), 1, pad)?)?;
            i += 2;
        }
        let residual = h.conv2d(self.tensors[i], Some(self.tensors[i + 1]), 1, pad)?;
        x.add(residual)
    }
}
