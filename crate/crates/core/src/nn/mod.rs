//! Dense tensors with reverse-mode differentiation, the classifier and its
//! optimizer. Everything is `f64`.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Gradients, Graph, Var};
pub use model::{
    block_forward, cross_entropy, head_forward, lembs_forward, probabilities, Block, BlockOptions, BlockVars, BnMode,
    EmbedMode, Model, ModelConfig, ParamId, ParamStore, StepStats,
};
pub use ops::{cross_entropy_probs, softmax_rows, BatchStats};
pub use optim::{AdamW, AdamWConfig};
pub use tensor::Tensor;

#[cfg(test)]
mod grad_tests {
    use rand::Rng as _;

    use super::gradcheck::max_relative_error;
    use super::*;
    use crate::seed::{self, Rng};

    const STEP: f64 = 1e-5;
    const OP_TOL: f64 = 1e-6;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn probe(g: &mut Graph, y: Var) -> Var {
        let n = g.value(y).numel();
        let mut rng = seed::rng(77);
        let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.dot_const(y, w).unwrap()
    }

    fn check(inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> crate::error::Result<Var>) {
        let err = max_relative_error(inputs, STEP, build).unwrap();
        assert!(err <= OP_TOL, "max relative error {err:e}");
    }

    #[test]
    fn grouped_linear() {
        let mut rng = seed::rng(1);
        let inputs = [random(&[2, 3, 4], &mut rng), random(&[3, 5, 4], &mut rng), random(&[3, 5], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.grouped_linear(v[0], v[1], v[2])?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn dwconv() {
        let mut rng = seed::rng(2);
        let inputs = [random(&[2, 6, 2, 2], &mut rng), random(&[3, 4], &mut rng), random(&[4], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.dwconv_time(v[0], v[1], v[2])?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn gelu_and_swap() {
        let mut rng = seed::rng(3);
        let inputs = [random(&[2, 3, 4], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.gelu(v[0]);
            let y = g.swap_last2(y)?;
            let y = g.reshape(y, vec![6, 4])?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn add_and_mul_const() {
        let mut rng = seed::rng(4);
        let inputs = [random(&[3, 4], &mut rng), random(&[3, 4], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.add(v[0], v[1])?;
            let y = g.mul_const(y, (0..12).map(|i| i as f64 * 0.5).collect())?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn batch_norm_train_mode() {
        let mut rng = seed::rng(5);
        let inputs = [random(&[2, 5, 3], &mut rng), random(&[3], &mut rng), random(&[3], &mut rng)];
        check(&inputs, |g, v| {
            let (y, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn batch_norm_eval_mode() {
        let mut rng = seed::rng(6);
        let inputs = [random(&[2, 5, 3], &mut rng), random(&[3], &mut rng), random(&[3], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn standardize() {
        let mut rng = seed::rng(7);
        let inputs = [random(&[2, 6, 3], &mut rng)];
        check(&inputs, |g, v| {
            let y = g.standardize_time(v[0], 1e-8)?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn fused_cross_entropy() {
        let mut rng = seed::rng(8);
        let inputs = [random(&[4, 5], &mut rng)];
        let labels = [0u16, 4, 2, 2];
        let err = max_relative_error(&inputs, STEP, |g, v| g.softmax_cross_entropy(v[0], &labels)).unwrap();
        assert!(err <= 1e-7, "{err:e}");
        // (softmax − onehot)/T
        let mut g = Graph::new();
        let z = g.leaf(inputs[0].clone());
        let loss = g.softmax_cross_entropy(z, &labels).unwrap();
        let grads = g.backward(loss).unwrap();
        let mut want = softmax_rows(&inputs[0].data, 5);
        for (t, &l) in labels.iter().enumerate() {
            want[t * 5 + l as usize] -= 1.0;
        }
        for (a, w) in grads.get(z).unwrap().iter().zip(&want) {
            assert!((a - w / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn block_input_and_parameters() {
        let mut rng = seed::rng(9);
        let config = ModelConfig {
            kernel: 3,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::default();
        let block = Block::init(&mut store, "b", 2, 2, &config, &mut rng);
        let mut inputs = vec![random(&[2, 4, 2, 2], &mut rng)];
        inputs.extend(store.tensors.iter().cloned());
        check(&inputs, |g, v| {
            let (y, _) = block_forward(g, v[0], &block.vars(&v[1..]), BlockOptions { bn: BnMode::Train, use_ffn: true })?;
            Ok(probe(g, y))
        });
    }

    #[test]
    fn head() {
        let mut rng = seed::rng(10);
        let inputs = [random(&[2, 3, 2, 2], &mut rng), random(&[1, 4, 4], &mut rng), random(&[1, 4], &mut rng)];
        let labels = [0u16, 1, 2, 3, 0, 1];
        check(&inputs, |g, v| {
            let logits = head_forward(g, v[0], v[1], v[2], None)?;
            cross_entropy(g, logits, &labels)
        });
    }

    #[test]
    fn lembs() {
        let mut rng = seed::rng(11);
        let inputs = [random(&[2, 5, 3], &mut rng), random(&[3, 4, 1], &mut rng), random(&[3, 4], &mut rng)];
        check(&inputs, |g, v| {
            let y = lembs_forward(g, v[0], v[1], v[2])?;
            Ok(probe(g, y))
        });
    }
}
