//! Scalar reverse-mode differentiation on a flat tape.
//!
//! The physics losses are ordinary arithmetic over real scalars, so they are
//! written once, generic over [`Scalar`], and instantiated twice: with `f64`
//! for fast evaluation and with tape-backed [`Var`] when a gradient with
//! respect to the network outputs is wanted. Recording is append-only; each
//! arithmetic operation pushes one node holding its parent indices and local
//! partial derivatives, and [`Tape::gradient`] runs a single reverse sweep.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

/// Real scalar interface shared by `f64` and [`Var`].
///
/// Constants enter expressions through the `f64` operand overloads, so
/// generic code keeps literals on the right: `x * 2.0`, `x - 1.0`. The
/// [`Scalar::lit`] helper mints a constant in the same differentiation
/// context as an existing scalar when no operand position fits.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// The numeric value the scalar currently holds.
    fn value(self) -> f64;

    /// A constant with value `v` usable alongside `self`.
    fn lit(self, v: f64) -> Self {
        self * 0.0 + v
    }
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    weights: [f64; 2],
}

/// Append-only record of scalar operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Starts a differentiable variable with value `v`.
    pub fn leaf(&self, v: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [0, 0],
            weights: [0.0, 0.0],
        });
        Var {
            value: v,
            index,
            tape: self,
        }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape overflow");
        nodes.push(node);
        index
    }

    /// Adjoints of every recorded node with respect to `root`.
    pub fn gradient(&self, root: Var<'_>) -> Gradient {
        assert!(
            std::ptr::eq(root.tape, self),
            "root was recorded on a different tape"
        );
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0f64; nodes.len()];
        adjoints[root.index as usize] = 1.0;
        for i in (0..nodes.len()).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for slot in 0..2 {
                let w = node.weights[slot];
                if w != 0.0 {
                    adjoints[node.parents[slot] as usize] += w * a;
                }
            }
        }
        Gradient { adjoints }
    }
}

/// Result of a reverse sweep; query it with the variables of interest.
pub struct Gradient {
    adjoints: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints[v.index as usize]
    }
}

/// Scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    value: f64,
    index: u32,
    tape: &'t Tape,
}

impl<'t> Var<'t> {
    fn binary(self, other: Var<'t>, value: f64, wa: f64, wb: f64) -> Var<'t> {
        debug_assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands live on different tapes"
        );
        let index = self.tape.push(Node {
            parents: [self.index, other.index],
            weights: [wa, wb],
        });
        Var {
            value,
            index,
            tape: self.tape,
        }
    }

    fn unary(self, value: f64, weight: f64) -> Var<'t> {
        let index = self.tape.push(Node {
            parents: [self.index, self.index],
            weights: [weight, 0.0],
        });
        Var {
            value,
            index,
            tape: self.tape,
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.value
    }
}

/// Complex number over a generic real scalar.
#[derive(Clone, Copy)]
pub struct Cx<S> {
    pub re: S,
    pub im: S,
}

impl<S: Scalar> Cx<S> {
    pub fn new(re: S, im: S) -> Self {
        Self { re, im }
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: -self.im,
        }
    }

    /// Multiplication by the imaginary unit.
    pub fn mul_i(self) -> Self {
        Self {
            re: -self.im,
            im: self.re,
        }
    }

    pub fn scale(self, f: f64) -> Self {
        Self {
            re: self.re * f,
            im: self.im * f,
        }
    }

    pub fn norm_sqr(self) -> S {
        self.re * self.re + self.im * self.im
    }

    pub fn value(self) -> num_complex::Complex<f64> {
        num_complex::Complex::new(self.re.value(), self.im.value())
    }
}

impl<S: Scalar> Add for Cx<S> {
    type Output = Cx<S>;
    fn add(self, rhs: Cx<S>) -> Cx<S> {
        Cx {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl<S: Scalar> Sub for Cx<S> {
    type Output = Cx<S>;
    fn sub(self, rhs: Cx<S>) -> Cx<S> {
        Cx {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl<S: Scalar> Mul for Cx<S> {
    type Output = Cx<S>;
    fn mul(self, rhs: Cx<S>) -> Cx<S> {
        Cx {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl<S: Scalar> Neg for Cx<S> {
    type Output = Cx<S>;
    fn neg(self) -> Cx<S> {
        Cx {
            re: -self.re,
            im: -self.im,
        }
    }
}
