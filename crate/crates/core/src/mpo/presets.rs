use super::plan::ShapePlan;

/// Named shape plans of the embedding, feed-forward and attention weights
/// of ALBERT- and BERT-sized encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub row_factors: &'static [usize],
    pub col_factors: &'static [usize],
}

impl Preset {
    pub fn plan(&self) -> ShapePlan {
        ShapePlan::new(self.rows, self.cols, self.row_factors.to_vec(), self.col_factors.to_vec())
            .expect("preset factors cover their matrix")
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "albert-embedding",
        rows: 30000,
        cols: 128,
        row_factors: &[5, 10, 10, 10, 6],
        col_factors: &[2, 2, 4, 4, 2],
    },
    Preset {
        name: "albert-ffn",
        rows: 768,
        cols: 3072,
        row_factors: &[3, 4, 4, 4, 4],
        col_factors: &[4, 4, 8, 6, 4],
    },
    Preset {
        name: "albert-ffn-out",
        rows: 3072,
        cols: 768,
        row_factors: &[4, 4, 8, 6, 4],
        col_factors: &[3, 4, 4, 4, 4],
    },
    Preset {
        name: "albert-attention",
        rows: 768,
        cols: 768,
        row_factors: &[3, 4, 4, 4, 4],
        col_factors: &[4, 4, 4, 4, 3],
    },
    // 30522 vocabulary rows, zero-padded to 30720
    Preset {
        name: "bert-embedding",
        rows: 30522,
        cols: 768,
        row_factors: &[6, 8, 8, 8, 10],
        col_factors: &[3, 4, 4, 4, 4],
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
