use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DistillError;
use crate::features::LatentVector;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Linear layers in the adapter; the first two are followed by ReLU.
pub const ADAPTER_LAYERS: usize = 3;

/// Two-hidden-layer MLP mapping student latents into teacher latent space:
/// `D_s → H → H → D_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter<T> {
    dims: [usize; ADAPTER_LAYERS + 1],
    params: ParamStore<T>,
    ids: Vec<(ParamId, ParamId)>,
}

/// Adapter parameters bound to one tape.
#[derive(Debug, Clone)]
pub struct BoundAdapter {
    vars: Vec<Var>,
}

fn layer_names(l: usize) -> (String, String) {
    (format!("layer{l}.weight"), format!("layer{l}.bias"))
}

impl<T: Scalar> Adapter<T> {
    fn build(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        mut init: impl FnMut(usize, &[usize]) -> Tensor<T>,
    ) -> Result<Self, DistillError> {
        if in_dim == 0 || hidden == 0 || out_dim == 0 {
            return Err(DistillError::InvalidConfig(format!(
                "adapter dimensions {in_dim}x{hidden}x{out_dim}"
            )));
        }
        let dims = [in_dim, hidden, hidden, out_dim];
        let mut params = ParamStore::new();
        let mut ids = Vec::with_capacity(ADAPTER_LAYERS);
        for l in 0..ADAPTER_LAYERS {
            let (w, b) = layer_names(l);
            let wi = params.insert(w, init(l, &[dims[l], dims[l + 1]]));
            let bi = params.insert(b, init(l, &[dims[l + 1]]));
            ids.push((wi, bi));
        }
        Ok(Self { dims, params, ids })
    }

    /// Uniform `(-a, a)` initialisation with `a = sqrt(1 / fan_in)`.
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Result<Self, DistillError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [in_dim, hidden, hidden];
        Self::build(in_dim, hidden, out_dim, |l, shape| {
            let a = (1.0 / dims[l] as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            let n = shape.iter().product();
            let data = (0..n).map(|_| T::of(dist.sample(&mut rng))).collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches data")
        })
    }

    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Result<Self, DistillError> {
        Self::build(in_dim, hidden, out_dim, |_, shape| Tensor::zeros(shape))
    }

    /// Square identity maps with zero biases.
    pub fn identity(dim: usize) -> Result<Self, DistillError> {
        Self::build(dim, dim, dim, |_, shape| match shape {
            [n, _] => Tensor::identity(*n),
            _ => Tensor::zeros(shape),
        })
    }

    /// Rebuilds an adapter from stored `layer{l}.weight/bias` tensors.
    pub fn from_params(stored: &ParamStore<T>) -> Result<Self, DistillError> {
        let shape_of = |name: &str| {
            stored
                .id_of(name)
                .map(|id| stored.value(id).shape().to_vec())
                .ok_or_else(|| DistillError::Metadata(format!("adapter parameter {name} missing")))
        };
        let first = shape_of("layer0.weight")?;
        let last = shape_of(&layer_names(ADAPTER_LAYERS - 1).0)?;
        let (in_dim, hidden, out_dim) = match (first.as_slice(), last.as_slice()) {
            ([i, h], [_, o]) => (*i, *h, *o),
            _ => return Err(DistillError::Metadata("adapter weights must be matrices".into())),
        };
        let mut adapter = Self::zeros(in_dim, hidden, out_dim)?;
        adapter.params.load_values(stored)?;
        Ok(adapter)
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn hidden(&self) -> usize {
        self.dims[1]
    }

    pub fn out_dim(&self) -> usize {
        self.dims[ADAPTER_LAYERS]
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundAdapter {
        BoundAdapter {
            vars: self.params.bind(tape),
        }
    }

    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &BoundAdapter) {
        self.params.accumulate_grads(tape, &bound.vars);
    }

    /// linear → ReLU → linear → ReLU → linear.
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, bound: &BoundAdapter, x: Var) -> Result<Var, DistillError> {
        let found = tape.value(x).len();
        if found != self.in_dim() {
            return Err(DistillError::AdapterInput {
                expected: self.in_dim(),
                found,
            });
        }
        let mut h = x;
        for (l, &(w, b)) in self.ids.iter().enumerate() {
            h = tape.matmul(h, bound.vars[w.0])?;
            h = tape.add(h, bound.vars[b.0])?;
            if l + 1 < ADAPTER_LAYERS {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Adapted latent. The audio/visual split point of the input is kept,
    /// since both sides come from the same extractors.
    pub fn forward(&self, latent: &LatentVector<T>) -> Result<LatentVector<T>, DistillError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.constant(latent.to_tensor());
        let y = self.forward_on_tape(&mut tape, &bound, x)?;
        let data = tape.value(y).data().to_vec();
        let split = latent.audio_dim().min(data.len());
        Ok(LatentVector::new(data, split))
    }
}

/// `l1_loss(adapter(student), teacher)`; the teacher side is a constant.
pub fn rep_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    adapter: &Adapter<T>,
    bound: &BoundAdapter,
    student: Var,
    teacher: &LatentVector<T>,
) -> Result<(Var, Var), DistillError> {
    if teacher.len() != adapter.out_dim() {
        return Err(DistillError::LatentMismatch {
            adapted: adapter.out_dim(),
            teacher: teacher.len(),
        });
    }
    let adapted = adapter.forward_on_tape(tape, bound, student)?;
    let target = tape.constant(teacher.to_tensor());
    Ok((tape.l1_loss(adapted, target)?, adapted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latent(data: &[f64]) -> LatentVector<f64> {
        LatentVector::new(data.to_vec(), 1)
    }

    #[test]
    fn zero_adapter_gives_zero_output() {
        let a = Adapter::<f64>::zeros(3, 4, 5).unwrap();
        let y = a.forward(&latent(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[0.0; 5]);
    }

    #[test]
    fn identity_passes_non_negative_input() {
        let a = Adapter::<f64>::identity(3).unwrap();
        let x = latent(&[0.0, 0.5, 2.0]);
        assert_eq!(a.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn rejects_wrong_input_size() {
        let a = Adapter::<f64>::new(3, 4, 3, 1).unwrap();
        assert!(matches!(
            a.forward(&latent(&[1.0, 2.0])),
            Err(DistillError::AdapterInput { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn params_round_trip() {
        let a = Adapter::<f64>::new(3, 4, 2, 9).unwrap();
        let b = Adapter::from_params(a.params()).unwrap();
        assert_eq!(a, b);
        assert_eq!((b.in_dim(), b.hidden(), b.out_dim()), (3, 4, 2));
    }

    #[test]
    fn teacher_side_gets_no_gradient() {
        let a = Adapter::<f64>::new(3, 3, 3, 2).unwrap();
        let mut tape = Tape::new();
        let bound = a.bind(&mut tape);
        let s = tape.constant(Tensor::vector(vec![0.3, -0.2, 0.9]));
        let teacher = latent(&[0.1, 0.2, 0.3]);
        let (loss, _) = rep_loss_on_tape(&mut tape, &a, &bound, s, &teacher).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(s).is_none());
        assert!(bound
            .vars
            .iter()
            .any(|&v| tape.grad(v).unwrap().iter().any(|g| *g != 0.0)));
    }
}
