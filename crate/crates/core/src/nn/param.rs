use crate::real::Real;

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Handle to a non-trainable tensor (e.g. running statistics).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Buffer<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

/// Owns every tensor of a model in registration order. The order is part
/// of the model's identity: optimizers and checkpoints index by it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn add_param(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<T>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<T>) -> BufferId {
        self.buffers.push(Buffer {
            name: name.into(),
            shape: shape.to_vec(),
            value,
        });
        BufferId(self.buffers.len() - 1)
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].grad
    }

    #[inline]
    pub fn buffer(&self, id: BufferId) -> &[T] {
        &self.buffers[id.0].value
    }

    #[inline]
    pub fn buffer_mut(&mut self, id: BufferId) -> &mut [T] {
        &mut self.buffers[id.0].value
    }

    /// Parameter value and gradient, borrowed together.
    pub fn value_and_grad(&mut self, id: ParamId) -> (&[T], &mut [T]) {
        let p = &mut self.params[id.0];
        (&p.value, &mut p.grad)
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Total number of trainable scalars.
    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }
}
