use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::linalg::{matmul, matmul_nt, matmul_tn};
use crate::tensor::{sigmoid, Tensor};
use crate::SeededRng;

use super::layers::{HiddenStack, HiddenStackCache, Pass};
use super::params::{Grads, ParamSet};
use super::{Arch, InputDims, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmSpec {
    pub hidden_size: usize,
    /// Append the observation mask to each month's input vector.
    pub include_mask: bool,
    /// Fully connected layers on top of the final hidden state.
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
}

impl Default for LstmSpec {
    fn default() -> Self {
        Self {
            hidden_size: 500,
            include_mask: false,
            hidden: vec![100, 100],
            batch_norm: true,
        }
    }
}

/// Parameter indices for the four gates. `c` entries are the peephole
/// weights; the cell candidate has none.
#[derive(Debug, Clone, Copy)]
struct Gate {
    x: usize,
    h: usize,
    c: Option<usize>,
    b: usize,
}

/// Peephole LSTM run over the backward window; the last hidden state is
/// the patient representation.
#[derive(Debug, Clone)]
pub struct Lstm {
    spec: LstmSpec,
    dims: InputDims,
    input_size: usize,
    params: ParamSet,
    input_gate: Gate,
    forget_gate: Gate,
    candidate: Gate,
    output_gate: Gate,
    stack: HiddenStack,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    z: Vec<f64>,
    c: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub struct LstmCache {
    batch: usize,
    steps: Vec<Step>,
    stack: HiddenStackCache,
}

impl Lstm {
    pub fn new(spec: LstmSpec, dims: InputDims, seed: u64) -> Result<Self> {
        if spec.hidden_size == 0 {
            return Err(Error::Config("lstm hidden size must be >= 1".into()));
        }
        if spec.hidden.contains(&0) {
            return Err(Error::Config(
                "lstm fully connected sizes must be positive".into(),
            ));
        }
        let input_size = if spec.include_mask {
            2 * dims.labs
        } else {
            dims.labs
        };
        let hs = spec.hidden_size;
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let gate = |name: &str, peephole: bool, params: &mut ParamSet, rng: &mut SeededRng| Gate {
            x: params.add_uniform(format!("lstm.x_{name}"), &[input_size, hs], input_size, rng),
            h: params.add_uniform(format!("lstm.h_{name}"), &[hs, hs], hs, rng),
            c: peephole.then(|| params.add_uniform(format!("lstm.c_{name}"), &[hs, hs], hs, rng)),
            b: params.add_uniform(format!("lstm.b_{name}"), &[hs], hs, rng),
        };
        let input_gate = gate("i", true, &mut params, &mut rng);
        let forget_gate = gate("f", true, &mut params, &mut rng);
        let candidate = gate("z", false, &mut params, &mut rng);
        let output_gate = gate("o", true, &mut params, &mut rng);
        let stack = HiddenStack::register(
            &mut params,
            hs,
            &spec.hidden,
            dims.diseases,
            spec.batch_norm,
            &mut rng,
        );
        Ok(Self {
            spec,
            dims,
            input_size,
            params,
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            stack,
        })
    }

    pub fn spec(&self) -> &LstmSpec {
        &self.spec
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    fn preact(&self, gate: Gate, x: &[f64], h: &[f64], c: &[f64], batch: usize) -> Vec<f64> {
        let hs = self.spec.hidden_size;
        let p = &self.params;
        let mut a = matmul(x, p.get(gate.x).data(), batch, self.input_size, hs);
        let rec = matmul(h, p.get(gate.h).data(), batch, hs, hs);
        for (v, r) in a.iter_mut().zip(&rec) {
            *v += r;
        }
        if let Some(ci) = gate.c {
            let peep = matmul(c, p.get(ci).data(), batch, hs, hs);
            for (v, r) in a.iter_mut().zip(&peep) {
                *v += r;
            }
        }
        let b = p.get(gate.b).data();
        for row in a.chunks_mut(hs) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        a
    }

    fn run(&self, input: &Tensor) -> Result<(Vec<Step>, Vec<f64>)> {
        input.expect_rank(3, "lstm input")?;
        let (batch, steps, width) = (input.dim(0), self.dims.window, self.input_size);
        input.expect_shape(&[batch, steps, width])?;
        let hs = self.spec.hidden_size;
        let mut h = vec![0.0; batch * hs];
        let mut c = vec![0.0; batch * hs];
        let mut cache = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x = Vec::with_capacity(batch * width);
            for s in 0..batch {
                let start = (s * steps + t) * width;
                x.extend_from_slice(&input.data()[start..start + width]);
            }
            let i: Vec<f64> = self
                .preact(self.input_gate, &x, &h, &c, batch)
                .into_iter()
                .map(sigmoid)
                .collect();
            let f: Vec<f64> = self
                .preact(self.forget_gate, &x, &h, &c, batch)
                .into_iter()
                .map(sigmoid)
                .collect();
            let z: Vec<f64> = self
                .preact(self.candidate, &x, &h, &c, batch)
                .into_iter()
                .map(f64::tanh)
                .collect();
            let c_new: Vec<f64> = (0..batch * hs).map(|k| f[k] * c[k] + i[k] * z[k]).collect();
            let o: Vec<f64> = self
                .preact(self.output_gate, &x, &h, &c_new, batch)
                .into_iter()
                .map(sigmoid)
                .collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
            cache.push(Step {
                x,
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new.clone()),
                i,
                f,
                z,
                c: c_new,
                o,
                tanh_c,
            });
        }
        Ok((cache, h))
    }

    /// Final hidden state `h_B` for every sequence, `[batch, hidden_size]`.
    pub fn encode(&self, input: &Tensor) -> Result<Tensor> {
        let (_, h) = self.run(input)?;
        Tensor::new(vec![input.dim(0), self.spec.hidden_size], h)
    }

    fn accumulate(
        &self,
        grads: &mut Grads,
        idx: usize,
        lhs: &[f64],
        rows: usize,
        cols: usize,
        delta: &[f64],
    ) -> Result<()> {
        let hs = self.spec.hidden_size;
        let g = matmul_tn(lhs, delta, rows, cols, hs);
        grads.accumulate(idx, Tensor::new(vec![cols, hs], g)?)
    }
}

impl Network for Lstm {
    type Cache = LstmCache;

    fn arch(&self) -> Arch {
        Arch::Lstm
    }

    fn dims(&self) -> InputDims {
        self.dims
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn spec_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    /// `[batch, B, D]` (or `[batch, B, 2D]` with mask channels).
    fn input(&self, examples: &[&Example]) -> Result<Tensor> {
        let (d, b) = (self.dims.labs, self.dims.window);
        let w = self.input_size;
        let mut data = vec![0.0; examples.len() * b * w];
        for (s, e) in examples.iter().enumerate() {
            e.x.expect_shape(&[d, b])?;
            for lab in 0..d {
                for t in 0..b {
                    let base = (s * b + t) * w;
                    data[base + lab] = e.x.data()[lab * b + t];
                    if self.spec.include_mask {
                        data[base + d + lab] = e.mask.data()[lab * b + t];
                    }
                }
            }
        }
        Tensor::new(vec![examples.len(), b, w], data)
    }

    fn forward(&self, input: &Tensor, pass: &mut Pass) -> Result<(Tensor, LstmCache)> {
        let batch = input.dim(0);
        let (steps, h) = self.run(input)?;
        let rep = Tensor::new(vec![batch, self.spec.hidden_size], h)?;
        let (probs, stack) = self.stack.forward(&self.params, &rep, pass)?;
        Ok((
            probs,
            LstmCache {
                batch,
                steps,
                stack,
            },
        ))
    }

    fn backward(&self, cache: &LstmCache, grad_probs: &Tensor) -> Result<Grads> {
        let mut grads = Grads::for_params(&self.params);
        let hs = self.spec.hidden_size;
        let batch = cache.batch;
        let n = batch * hs;
        let p = &self.params;
        let mut dh = self
            .stack
            .backward(p, &cache.stack, grad_probs, &mut grads)?
            .into_data();
        let mut dc = vec![0.0; n];

        for step in cache.steps.iter().rev() {
            // h = o · tanh(c)
            let mut da_o = vec![0.0; n];
            for k in 0..n {
                let d_o = dh[k] * step.tanh_c[k];
                dc[k] += dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
                da_o[k] = d_o * step.o[k] * (1.0 - step.o[k]);
            }
            // output gate peeks at the new cell state
            let through_peep = matmul_nt(
                &da_o,
                p.get(self.output_gate.c.unwrap()).data(),
                batch,
                hs,
                hs,
            );
            for (a, b) in dc.iter_mut().zip(&through_peep) {
                *a += b;
            }
            // c = f · c_prev + i · z
            let mut da_i = vec![0.0; n];
            let mut da_f = vec![0.0; n];
            let mut da_z = vec![0.0; n];
            let mut dc_prev = vec![0.0; n];
            for k in 0..n {
                let (i, f, z) = (step.i[k], step.f[k], step.z[k]);
                da_i[k] = dc[k] * z * i * (1.0 - i);
                da_f[k] = dc[k] * step.c_prev[k] * f * (1.0 - f);
                da_z[k] = dc[k] * i * (1.0 - z * z);
                dc_prev[k] = dc[k] * f;
            }

            let mut dh_prev = vec![0.0; n];
            for (gate, delta) in [
                (self.input_gate, &da_i),
                (self.forget_gate, &da_f),
                (self.candidate, &da_z),
                (self.output_gate, &da_o),
            ] {
                self.accumulate(&mut grads, gate.x, &step.x, batch, self.input_size, delta)?;
                self.accumulate(&mut grads, gate.h, &step.h_prev, batch, hs, delta)?;
                let mut db = vec![0.0; hs];
                for row in delta.chunks(hs) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                grads.accumulate(gate.b, Tensor::from_vec(db))?;
                let back = matmul_nt(delta, p.get(gate.h).data(), batch, hs, hs);
                for (a, b) in dh_prev.iter_mut().zip(&back) {
                    *a += b;
                }
            }
            // peepholes on c_prev (input and forget gates); the output gate's
            // peephole reads c_t and was handled above
            self.accumulate(
                &mut grads,
                self.output_gate.c.unwrap(),
                &step.c,
                batch,
                hs,
                &da_o,
            )?;
            for (gate, delta) in [(self.input_gate, &da_i), (self.forget_gate, &da_f)] {
                let ci = gate.c.unwrap();
                self.accumulate(&mut grads, ci, &step.c_prev, batch, hs, delta)?;
                let back = matmul_nt(delta, p.get(ci).data(), batch, hs, hs);
                for (a, b) in dc_prev.iter_mut().zip(&back) {
                    *a += b;
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok(grads)
    }
}
