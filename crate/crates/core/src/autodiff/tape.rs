use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NO_PARENT: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    value: T,
    parents: [usize; 2],
    partials: [T; 2],
}

/// Append-only record of a scalar computation. Insertion order is a
/// topological order, so the reverse sweep is a single backward pass.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self::with_capacity(64)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(capacity)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every node. Requires exclusive access so no `Var` can outlive it.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    /// New leaf holding `value`.
    pub fn var(&self, value: T) -> Var<'_, T> {
        self.push(value, [NO_PARENT; 2], [T::zero(); 2])
    }

    /// Leaf whose gradient nobody reads. Same representation as [`Tape::var`].
    pub fn constant(&self, value: T) -> Var<'_, T> {
        self.var(value)
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, value: T, parents: [usize; 2], partials: [T; 2]) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            value,
            parents,
            partials,
        });
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn unary(&self, parent: usize, value: T, partial: T) -> Var<'_, T> {
        self.push(value, [parent, NO_PARENT], [partial, T::zero()])
    }

    fn binary(&self, parents: [usize; 2], value: T, partials: [T; 2]) -> Var<'_, T> {
        self.push(value, parents, partials)
    }

    /// Reverse sweep from `root`. Leaves that `root` does not depend on get 0.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Gradients<T>> {
        assert!(
            std::ptr::eq(root.tape, self),
            "backward called with a variable from another tape"
        );
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![T::zero(); root.index + 1];
        adjoints[root.index] = T::one();
        for i in (0..=root.index).rev() {
            let adj = adjoints[i];
            if adj == T::zero() {
                continue;
            }
            let node = &nodes[i];
            if !adj.is_finite() || !node.value.is_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    what: format!("value {} with adjoint {}", node.value, adj),
                });
            }
            for k in 0..2 {
                let p = node.parents[k];
                if p == NO_PARENT {
                    continue;
                }
                let contribution = adj * node.partials[k];
                if !contribution.is_finite() {
                    return Err(Error::NonFinite {
                        node: i,
                        what: format!("local gradient {} toward node {p}", node.partials[k]),
                    });
                }
                adjoints[p] += contribution;
            }
        }
        adjoints.resize(nodes.len(), T::zero());
        Ok(Gradients { adjoints })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adjoints: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, var: Var<'_, T>) -> T {
        self.adjoints.get(var.index).copied().unwrap_or_else(T::zero)
    }

    pub fn wrt_all(&self, vars: &[Var<'_, T>]) -> Vec<T> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// Handle to a node on a [`Tape`]. Cheap to copy; carries its value.
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    index: usize,
    value: T,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(self) -> T {
        self.value
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn tape(self) -> &'t Tape<T> {
        self.tape
    }

    fn same_tape(self, other: Var<'t, T>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "operands on different tapes");
    }

    pub fn exp(self) -> Self {
        let v = self.value.exp();
        self.tape.unary(self.index, v, v)
    }

    pub fn ln(self) -> Result<Self> {
        if self.value.is_nan() || self.value <= T::zero() {
            return Err(Error::Domain(format!("log of non-positive value {}", self.value)));
        }
        Ok(self.tape.unary(self.index, self.value.ln(), self.value.recip()))
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.tape.unary(self.index, t, T::one() - t * t)
    }

    pub fn square(self) -> Self {
        self.tape
            .unary(self.index, self.value * self.value, self.value + self.value)
    }

    pub fn scale(self, c: T) -> Self {
        self.tape.unary(self.index, self.value * c, c)
    }

    pub fn div(self, rhs: Self) -> Result<Self> {
        self.same_tape(rhs);
        if rhs.value == T::zero() {
            return Err(Error::Domain("division by zero".into()));
        }
        let inv = rhs.value.recip();
        let q = self.value * inv;
        Ok(self.tape.binary([self.index, rhs.index], q, [inv, -q * inv]))
    }

    /// Minimum; at a tie the gradient flows to `self`.
    pub fn min2(self, rhs: Self) -> Self {
        self.same_tape(rhs);
        if self.value <= rhs.value {
            self.tape.unary(self.index, self.value, T::one())
        } else {
            self.tape.unary(rhs.index, rhs.value, T::one())
        }
    }

    /// Maximum; at a tie the gradient flows to `self`.
    pub fn max2(self, rhs: Self) -> Self {
        self.same_tape(rhs);
        if self.value >= rhs.value {
            self.tape.unary(self.index, self.value, T::one())
        } else {
            self.tape.unary(rhs.index, rhs.value, T::one())
        }
    }

    /// Clamp to `[lo, hi]`. The boundary points keep the interior derivative 1.
    pub fn clip_range(self, lo: T, hi: T) -> Self {
        if self.value < lo {
            self.tape.unary(self.index, lo, T::zero())
        } else if self.value > hi {
            self.tape.unary(self.index, hi, T::zero())
        } else {
            self.tape.unary(self.index, self.value, T::one())
        }
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, rhs: Self) -> Self::Output {
        self.same_tape(rhs);
        self.tape
            .binary([self.index, rhs.index], self.value + rhs.value, [T::one(), T::one()])
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.same_tape(rhs);
        self.tape
            .binary([self.index, rhs.index], self.value - rhs.value, [T::one(), -T::one()])
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.same_tape(rhs);
        self.tape
            .binary([self.index, rhs.index], self.value * rhs.value, [rhs.value, self.value])
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Self::Output {
        self.scale(-T::one())
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, rhs: T) -> Self::Output {
        self.tape.unary(self.index, self.value + rhs, T::one())
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, rhs: T) -> Self::Output {
        self.tape.unary(self.index, self.value - rhs, T::one())
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, rhs: T) -> Self::Output {
        self.scale(rhs)
    }
}

/// Sum of a nonempty slice of variables.
pub fn sum<'t, T: Scalar>(vars: &[Var<'t, T>]) -> Option<Var<'t, T>> {
    let (first, rest) = vars.split_first()?;
    Some(rest.iter().fold(*first, |acc, &v| acc + v))
}
