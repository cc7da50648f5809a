/// Square binary attention mask; `get(i, j)` is whether query `i` may see key `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    pub n: usize,
    pub data: Vec<bool>,
}

impl MaskMatrix {
    pub fn all_ones(n: usize) -> Self {
        Self { n, data: vec![true; n * n] }
    }

    pub fn causal(n: usize) -> Self {
        local_mask(n, 1)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Hides padding keys from every non-padding query. Padding queries keep
    /// their row so no row becomes empty.
    pub fn with_padding(&self, pad: &[bool]) -> Self {
        assert_eq!(pad.len(), self.n);
        let mut out = self.clone();
        for i in (0..self.n).filter(|&i| !pad[i]) {
            for j in (0..self.n).filter(|&j| pad[j]) {
                out.data[i * self.n + j] = false;
            }
        }
        out
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as u8 as f64).collect()
    }
}

/// Block-causal mask of size `l * l0`: every token sees all tokens up to the
/// end of its own block of `l0`. `l0 = 1` is the standard causal mask.
pub fn local_mask(l: usize, l0: usize) -> MaskMatrix {
    assert!(l >= 1 && l0 >= 1, "local_mask needs l, l0 >= 1");
    let n = l * l0;
    let mut data = vec![false; n * n];
    for i in 0..n {
        let end = (i / l0 + 1) * l0;
        data[i * n..i * n + end].fill(true);
    }
    MaskMatrix { n, data }
}
