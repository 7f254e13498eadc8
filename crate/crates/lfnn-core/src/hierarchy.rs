//! Worker partitioning, dynamic leader selection, and loss composition.
//!
//! A layer's output units are split into disjoint contiguous workers. Every
//! selection round the workers with the lowest prediction loss become
//! leaders; the single best leader serves as the alignment reference for all
//! followers in the same layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{sigmoid_scalar, softmax_into, Tensor};

/// What a worker is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkerKind {
    /// Workers own groups of neurons in a dense layer.
    NeuronWise,
    /// Workers own groups of filters in a conv layer.
    FilterWise,
}

/// Maps a layer's output units (or filters) onto disjoint, contiguous workers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerPartition {
    pub layer_index: usize,
    pub kind: WorkerKind,
    pub num_workers: usize,
    pub worker_width: usize,
}

impl WorkerPartition {
    pub fn new(
        layer_index: usize,
        kind: WorkerKind,
        num_workers: usize,
        worker_width: usize,
    ) -> Result<Self> {
        if num_workers == 0 || worker_width == 0 {
            return Err(Error::Partition(format!(
                "need positive worker count and width, got {num_workers}x{worker_width}"
            )));
        }
        Ok(Self {
            layer_index,
            kind,
            num_workers,
            worker_width,
        })
    }

    /// Total units covered by the partition.
    pub fn units(&self) -> usize {
        self.num_workers * self.worker_width
    }

    pub fn check_units(&self, layer_units: usize) -> Result<()> {
        if self.units() != layer_units {
            return Err(Error::Partition(format!(
                "{} workers x {} units cover {} outputs but the layer has {}",
                self.num_workers,
                self.worker_width,
                self.units(),
                layer_units
            )));
        }
        Ok(())
    }

    /// Unit index range owned by worker `w`.
    pub fn range(&self, w: usize) -> std::ops::Range<usize> {
        debug_assert!(w < self.num_workers);
        w * self.worker_width..(w + 1) * self.worker_width
    }
}

/// Slice a `[batch, units]` tensor into one `[batch, width]` tensor per
/// worker. For filter-wise workers the input is the globally average-pooled
/// map matrix, so slicing is identical for both kinds.
pub fn worker_outputs<S: Scalar>(
    layer_output: &Tensor<S>,
    partition: &WorkerPartition,
) -> Result<Vec<Tensor<S>>> {
    if layer_output.rank() != 2 {
        return Err(Error::InvalidShape {
            op: "worker_outputs",
            shape: layer_output.shape().to_vec(),
            reason: "expected [batch, units]".into(),
        });
    }
    let (batch, units) = (layer_output.dim(0), layer_output.dim(1));
    partition.check_units(units)?;
    let width = partition.worker_width;
    let mut out = Vec::with_capacity(partition.num_workers);
    for w in 0..partition.num_workers {
        let r = partition.range(w);
        let mut t = Tensor::zeros(&[batch, width]);
        for b in 0..batch {
            t.row_mut(b)
                .copy_from_slice(&layer_output.row(b)[r.clone()]);
        }
        out.push(t);
    }
    Ok(out)
}

/// Prediction head attached to every worker (and to the output layer).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionHead {
    /// Width-1 workers: logistic output with binary cross-entropy.
    SigmoidBce,
    /// Width-K workers: softmax over the worker's K units with cross-entropy.
    SoftmaxCe,
}

/// Per-example supervision for one batch.
#[derive(Clone, Debug)]
pub enum BatchTargets {
    /// 0/1 label per example (one-vs-all tasks).
    Binary(Vec<u8>),
    /// Class index per example.
    Classes(Vec<u8>),
}

impl BatchTargets {
    pub fn len(&self) -> usize {
        match self {
            BatchTargets::Binary(v) => v.len(),
            BatchTargets::Classes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const PROB_CLIP: f64 = 1e-7;

fn clip<S: Scalar>(p: S) -> S {
    let lo = S::from_f64(PROB_CLIP);
    let hi = S::from_f64(1.0 - PROB_CLIP);
    p.max(lo).min(hi)
}

/// Batch-mean prediction loss of one worker given its logits.
///
/// Probabilities are clipped to `[1e-7, 1 - 1e-7]` before the log so the
/// loss stays finite for saturated predictions.
pub fn worker_prediction_loss<S: Scalar>(
    worker_out: &Tensor<S>,
    targets: &BatchTargets,
    head: PredictionHead,
) -> Result<S> {
    let (batch, width) = (worker_out.dim(0), worker_out.dim(1));
    if batch != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "worker_prediction_loss",
            left: worker_out.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    match (head, targets) {
        (PredictionHead::SigmoidBce, BatchTargets::Binary(ts)) => {
            if width != 1 {
                return Err(Error::InvalidShape {
                    op: "worker_prediction_loss",
                    shape: worker_out.shape().to_vec(),
                    reason: "sigmoid-bce head wants width 1".into(),
                });
            }
            let mut acc = S::zero();
            for (b, &t) in ts.iter().enumerate() {
                let p = clip(sigmoid_scalar(worker_out.at2(b, 0)));
                let term = if t == 1 {
                    -p.ln()
                } else {
                    -(S::one() - p).ln()
                };
                acc = acc + term;
            }
            Ok(acc / S::from_f64(batch as f64))
        }
        (PredictionHead::SoftmaxCe, BatchTargets::Classes(ts)) => {
            let mut probs = vec![S::zero(); width];
            let mut acc = S::zero();
            for (b, &t) in ts.iter().enumerate() {
                let t = t as usize;
                if t >= width {
                    return Err(Error::InvalidShape {
                        op: "worker_prediction_loss",
                        shape: worker_out.shape().to_vec(),
                        reason: format!("class {t} out of range for width {width}"),
                    });
                }
                softmax_into(&mut probs, worker_out.row(b));
                acc = acc - clip(probs[t]).ln();
            }
            Ok(acc / S::from_f64(batch as f64))
        }
        _ => Err(Error::InvalidShape {
            op: "worker_prediction_loss",
            shape: worker_out.shape().to_vec(),
            reason: "head kind does not match target kind".into(),
        }),
    }
}

/// Post-activation prediction vectors for one worker's logits.
pub fn head_predictions<S: Scalar>(logits: &Tensor<S>, head: PredictionHead) -> Tensor<S> {
    match head {
        PredictionHead::SigmoidBce => logits.map(sigmoid_scalar),
        PredictionHead::SoftmaxCe => {
            let width = logits.dim(1);
            let mut out = Tensor::zeros(logits.shape());
            for (orow, irow) in out
                .data_mut()
                .chunks_mut(width)
                .zip(logits.data().chunks(width))
            {
                softmax_into(orow, irow);
            }
            out
        }
    }
}

/// Number of leaders for a leadership fraction `delta` over `n_workers`:
/// `max(1, round-half-to-even(delta * n))`, capped at `n`.
pub fn leader_count(delta: f64, n_workers: usize) -> usize {
    debug_assert!(n_workers >= 1);
    let raw = (delta * n_workers as f64).round_ties_even() as usize;
    raw.clamp(1, n_workers)
}

/// Per-step record of which workers lead a layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeadershipAssignment {
    pub layer_index: usize,
    pub step: u64,
    /// Ascending worker indices of the selected leaders.
    pub leader_indices: Vec<usize>,
    /// The leader with the smallest loss (ties to the lowest index).
    pub best_leader: usize,
    pub per_worker_loss: Vec<f64>,
}

impl LeadershipAssignment {
    pub fn num_workers(&self) -> usize {
        self.per_worker_loss.len()
    }

    pub fn is_leader(&self, w: usize) -> bool {
        self.leader_indices.binary_search(&w).is_ok()
    }

    pub fn followers(&self) -> Vec<usize> {
        (0..self.num_workers())
            .filter(|w| !self.is_leader(*w))
            .collect()
    }
}

/// Select the `leader_count(delta, n)` workers with the smallest losses.
/// Ties break toward the lower worker index, so selection is deterministic.
pub fn select_leaders(per_worker_loss: &[f64], delta: f64) -> Result<LeadershipAssignment> {
    if per_worker_loss.is_empty() {
        return Err(Error::Empty("worker loss vector"));
    }
    let n = per_worker_loss.len();
    let k = leader_count(delta, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        per_worker_loss[a]
            .partial_cmp(&per_worker_loss[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let best_leader = order[0];
    let mut leader_indices = order[..k].to_vec();
    leader_indices.sort_unstable();
    Ok(LeadershipAssignment {
        layer_index: 0,
        step: 0,
        leader_indices,
        best_leader,
        per_worker_loss: per_worker_loss.to_vec(),
    })
}

/// Mean over followers of the batch-averaged mean squared difference between
/// each follower's prediction vector and the best leader's. The reference is
/// a recorded constant: no gradient flows into the leader through this loss.
pub fn follower_alignment_loss<S: Scalar>(
    follower_outs: &[&Tensor<S>],
    best_leader_out: &Tensor<S>,
) -> Result<S> {
    if follower_outs.is_empty() {
        return Ok(S::zero());
    }
    let mut acc = S::zero();
    for f in follower_outs {
        if f.shape() != best_leader_out.shape() {
            return Err(Error::ShapeMismatch {
                op: "follower_alignment_loss",
                left: f.shape().to_vec(),
                right: best_leader_out.shape().to_vec(),
            });
        }
        let mut mse = S::zero();
        for (&a, &b) in f.data().iter().zip(best_leader_out.data()) {
            let d = a - b;
            mse = mse + d * d;
        }
        acc = acc + mse / S::from_f64(f.len() as f64);
    }
    Ok(acc / S::from_f64(follower_outs.len() as f64))
}

/// One step's loss components and their composition.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Global prediction loss (backpropagated in LFNN mode, output-layer-local
    /// in the backprop-free mode).
    pub global: f64,
    /// Mean leader prediction loss over partitioned layers.
    pub leader_local: f64,
    /// Mean follower alignment loss over partitioned layers.
    pub follower_align: f64,
    pub total: f64,
}

/// `total = global + λ1 · leader_local + λ2 · follower_align`.
pub fn compose_loss_bp(
    global: f64,
    leader_local: f64,
    follower_align: f64,
    lambda1: f64,
    lambda2: f64,
) -> LossBreakdown {
    LossBreakdown {
        global,
        leader_local,
        follower_align,
        total: global + lambda1 * leader_local + lambda2 * follower_align,
    }
}

/// `total = global_out + leader_local + λ · follower_align`.
pub fn compose_loss_bpfree(
    global_out: f64,
    leader_local: f64,
    follower_align: f64,
    lambda: f64,
) -> LossBreakdown {
    LossBreakdown {
        global: global_out,
        leader_local,
        follower_align,
        total: global_out + leader_local + lambda * follower_align,
    }
}

/// The four loss-composition variants studied in LFNN mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Global loss plus both local losses.
    L1,
    /// Global loss plus the leader loss.
    L2,
    /// Global loss plus the follower alignment loss.
    L3,
    /// Global loss only.
    L4,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::L1,
        AblationVariant::L2,
        AblationVariant::L3,
        AblationVariant::L4,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::L1 => "L1",
            AblationVariant::L2 => "L2",
            AblationVariant::L3 => "L3",
            AblationVariant::L4 => "L4",
        }
    }
}

/// Which λ terms a variant keeps enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossMask {
    pub leader_local: bool,
    pub follower_align: bool,
}

pub fn ablation_variant(which: AblationVariant) -> LossMask {
    match which {
        AblationVariant::L1 => LossMask {
            leader_local: true,
            follower_align: true,
        },
        AblationVariant::L2 => LossMask {
            leader_local: true,
            follower_align: false,
        },
        AblationVariant::L3 => LossMask {
            leader_local: false,
            follower_align: true,
        },
        AblationVariant::L4 => LossMask {
            leader_local: false,
            follower_align: false,
        },
    }
}
