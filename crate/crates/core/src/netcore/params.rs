/// One fully connected layer. Weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }
}

/// Every trainable array of the scorer, in declaration order:
/// user embeddings, item embeddings, then `(weights, bias)` per layer.
///
/// The same container backs network parameters, gradients and optimizer
/// moments so that all three are shape-congruent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding_dim: usize,
    pub user_emb: Vec<f64>,
    pub item_emb: Vec<f64>,
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        Self {
            embedding_dim: other.embedding_dim,
            user_emb: vec![0.0; other.user_emb.len()],
            item_emb: vec![0.0; other.item_emb.len()],
            layers: other
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.user_emb, &self.item_emb];
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.user_emb, &mut self.item_emb];
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out
    }

    /// Labels matching [`Params::slices`], used in error messages.
    pub fn slice_names(&self) -> Vec<&'static str> {
        let mut out = vec!["user_embeddings", "item_embeddings"];
        for _ in &self.layers {
            out.push("layer_weights");
            out.push("layer_bias");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    /// Name of the first array holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.slices()
            .iter()
            .zip(self.slice_names())
            .find(|(s, _)| s.iter().any(|v| !v.is_finite()))
            .map(|(_, name)| name)
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        let a = self.slices();
        let b = other.slices();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// Copy of all entries in declaration order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrites all entries from a flat buffer in declaration order.
    pub fn copy_from_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.len() {
            return false;
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        true
    }

    /// Sum of squares over embeddings and weight matrices; biases excluded.
    pub fn l2_weights(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sq(&self.user_emb)
            + sq(&self.item_emb)
            + self.layers.iter().map(|l| sq(&l.weights)).sum::<f64>()
    }
}
