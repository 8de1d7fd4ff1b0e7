use super::{Graph, Node, Op, Var};
use crate::error::{NumericsError, Result};
use crate::kernels::gemm;
use crate::tensor::Tensor;

impl Graph {
    /// `[m × k] · [k × n] -> [m × n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NumericsError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        let value = Tensor::new([m, n], out)?;
        self.push("matmul", value, Op::MatMul { a, b }, &[a, b])
    }
}

pub(super) fn matmul_backward(nodes: &[Node], grads: &mut [Option<Vec<f32>>], a: Var, b: Var, g: &[f32]) {
    let av = &nodes[a.0].value;
    let bv = &nodes[b.0].value;
    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
    // dA = G · Bᵀ
    if let Some(da) = Graph::grad_slot(nodes, grads, a) {
        gemm(m, n, k, g, false, bv.data(), true, da, true);
    }
    // dB = Aᵀ · G
    if let Some(db) = Graph::grad_slot(nodes, grads, b) {
        gemm(k, m, n, av.data(), true, g, false, db, true);
    }
}
