use ndarray::Array2;

/// Boolean attention mask over `[CLS, image tokens, prompts]`; `true` means
/// row `i` may attend to column `j`.
///
/// CLS and image tokens see each other only. Prompts see CLS and image
/// tokens but no prompt, themselves included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    allowed: Array2<bool>,
    num_context: usize,
}

impl AttentionMask {
    pub fn new(num_context: usize, num_prompts: usize) -> Self {
        let n = num_context + num_prompts;
        let allowed = Array2::from_shape_fn((n, n), |(_, j)| j < num_context);
        Self {
            allowed,
            num_context,
        }
    }

    pub fn len(&self) -> usize {
        self.allowed.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_context(&self) -> usize {
        self.num_context
    }

    pub fn num_prompts(&self) -> usize {
        self.len() - self.num_context
    }

    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[[row, col]]
    }

    pub fn matrix(&self) -> &Array2<bool> {
        &self.allowed
    }

    pub fn allowed_keys(&self, row: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.allowed[[row, j]]).collect()
    }
}
