//! Temporal correction network.
//!
//! Reconstructed fields are cut into traces along the time axis, one per
//! `(y, x)` site and window of `n_t` steps, and a fully connected network
//! maps each reconstructed trace toward the original.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::layers::Dense;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Graph, ParamStore, Tensor};
use crate::tensor::TensorField;

/// Paired traces, row-major `[count, n_t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    pub n_t: usize,
    pub original: Vec<f64>,
    pub reconstructed: Vec<f64>,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.original.len() / self.n_t.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    /// Appends another set with the same trace length.
    pub fn extend(&mut self, other: &TraceSet) -> Result<()> {
        if other.n_t != self.n_t {
            return Err(Error::Shape(format!("trace length {} vs {}", other.n_t, self.n_t)));
        }
        self.original.extend_from_slice(&other.original);
        self.reconstructed.extend_from_slice(&other.reconstructed);
        Ok(())
    }

    /// Mean squared difference between the paired traces.
    pub fn mse(&self) -> f64 {
        mse(&self.original, &self.reconstructed)
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

fn windows(len: usize, n_t: usize) -> usize {
    len.div_ceil(n_t)
}

/// Traces of one field in `(y, x, window)` order. The last window of a site
/// repeats the final time step when `T` is not a multiple of `n_t`.
fn traces_of(field: &TensorField, n_t: usize) -> Vec<f64> {
    let [nt, ny, nx] = field.shape;
    let mut out = Vec::with_capacity(ny * nx * windows(nt, n_t) * n_t);
    for y in 0..ny {
        for x in 0..nx {
            for w in 0..windows(nt, n_t) {
                for k in 0..n_t {
                    out.push(field.get((w * n_t + k).min(nt - 1), y, x));
                }
            }
        }
    }
    out
}

pub fn extract_traces(original: &TensorField, reconstructed: &TensorField, n_t: usize) -> Result<TraceSet> {
    if n_t == 0 {
        return Err(Error::Config("trace length must be positive".into()));
    }
    if original.shape != reconstructed.shape {
        return Err(Error::Shape(format!(
            "original {:?} and reconstruction {:?} differ",
            original.shape, reconstructed.shape
        )));
    }
    Ok(TraceSet { n_t, original: traces_of(original, n_t), reconstructed: traces_of(reconstructed, n_t) })
}

/// `n_t -> 4 n_t -> 4 n_t -> n_t` with SiLU between layers and a linear output.
#[derive(Clone, Debug)]
pub struct TcNetwork {
    n_t: usize,
    pub params: ParamStore,
    layers: [Dense; 3],
}

impl TcNetwork {
    pub fn new(n_t: usize, seed: u64) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::Config("trace length must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = 4 * n_t;
        let layers = [
            Dense::new(&mut params, "tc.fc1", n_t, h, &mut rng),
            Dense::new(&mut params, "tc.fc2", h, h, &mut rng),
            Dense::new(&mut params, "tc.fc3", h, n_t, &mut rng),
        ];
        Ok(Self { n_t, params, layers })
    }

    /// Rebuilds a network from stored parameters; `n_t` is read from their shapes.
    pub fn from_params(params: &ParamStore) -> Result<Self> {
        let id = params.find("tc.fc1.weight").ok_or_else(|| Error::ModelMismatch("missing tc.fc1.weight".into()))?;
        let shape = &params.get(id).value.shape;
        if shape.len() != 2 {
            return Err(Error::ModelMismatch(format!("tc.fc1.weight has shape {shape:?}")));
        }
        let mut net = Self::new(shape[1], 0)?;
        net.params.load_values(params)?;
        Ok(net)
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    fn graph(&self, traces: &[f64]) -> Result<(Graph, crate::nn::Var)> {
        if traces.len() % self.n_t != 0 {
            return Err(Error::Shape(format!("{} samples is not a whole number of {}-step traces", traces.len(), self.n_t)));
        }
        let mut g = Graph::new();
        let mut h = g.input(Tensor::new(vec![traces.len() / self.n_t, self.n_t], traces.to_vec())?);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&mut g, &self.params, h)?;
            if i + 1 < self.layers.len() {
                h = g.silu(h);
            }
        }
        Ok((g, h))
    }

    /// Applies the network to row-major `[count, n_t]` traces.
    pub fn forward(&self, traces: &[f64]) -> Result<Vec<f64>> {
        if traces.is_empty() {
            return Ok(Vec::new());
        }
        let (g, out) = self.graph(traces)?;
        Ok(g.value(out).data.clone())
    }

    fn train_batch(&mut self, adam: &mut AdamState, input: &[f64], target: &[f64]) -> Result<f64> {
        let (mut g, out) = self.graph(input)?;
        let t = g.input(Tensor::new(g.shape(out).to_vec(), target.to_vec())?);
        let loss = g.mse(out, t)?;
        let value = g.value(loss).data[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("correction network training loss".into()));
        }
        g.backward(loss, &mut self.params)?;
        adam.step(&mut self.params)?;
        Ok(value)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TcOptions {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, lr: 1e-3, seed: 0 }
    }
}

pub fn tc_train(traces: &TraceSet, epochs: usize, seed: u64) -> Result<TcNetwork> {
    Ok(tc_train_with(traces, &TcOptions { epochs, seed, ..TcOptions::default() })?.0)
}

/// Trains on shuffled minibatches; returns the network and the mean loss of each epoch.
pub fn tc_train_with(traces: &TraceSet, opts: &TcOptions) -> Result<(TcNetwork, Vec<f64>)> {
    if traces.is_empty() {
        return Err(Error::Shape("no traces to train on".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let n_t = traces.n_t;
    let mut net = TcNetwork::new(n_t, opts.seed)?;
    let mut adam = AdamState::new(&net.params, opts.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..traces.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let (mut input, mut target) = (Vec::new(), Vec::new());
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            input.clear();
            target.clear();
            for &i in batch {
                input.extend_from_slice(&traces.reconstructed[i * n_t..(i + 1) * n_t]);
                target.extend_from_slice(&traces.original[i * n_t..(i + 1) * n_t]);
            }
            total += net.train_batch(&mut adam, &input, &target)? * batch.len() as f64;
        }
        history.push(total / traces.len() as f64);
    }
    Ok((net, history))
}

/// Replaces every trace of `reconstructed` with the network output.
pub fn tc_apply(network: &TcNetwork, reconstructed: &TensorField) -> Result<TensorField> {
    let n_t = network.n_t();
    let out = network.forward(&traces_of(reconstructed, n_t))?;
    let [nt, ny, nx] = reconstructed.shape;
    let per_site = windows(nt, n_t) * n_t;
    let mut values = vec![0.0; reconstructed.len()];
    for y in 0..ny {
        for x in 0..nx {
            let base = (y * nx + x) * per_site;
            for t in 0..nt {
                values[reconstructed.index(t, y, x)] = out[base + t];
            }
        }
    }
    reconstructed.with_values(values)
}
