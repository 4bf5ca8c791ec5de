//! Published per-class, headline and significance figures, transcribed as printed.
//! Era columns are pre-NN, pre-LLM, post-LLM.

use l1drift::{Era, L1Label};

pub const EVAL_ROWS_PER_ERA: u64 = 400;

pub struct ClassRow {
    pub label: L1Label,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
}

const fn row(label: L1Label, precision: [f64; 3], recall: [f64; 3], f1: [f64; 3]) -> ClassRow {
    ClassRow { label, precision, recall, f1 }
}

use L1Label::*;

pub const QWEN_FINETUNED: [ClassRow; 8] = [
    row(EnglishAmerican, [0.603, 0.569, 0.471], [0.700, 0.500, 0.800], [0.648, 0.574, 0.593]),
    row(EnglishBritish, [0.651, 0.696, 0.737], [0.560, 0.320, 0.280], [0.602, 0.438, 0.406]),
    row(French, [0.781, 0.720, 0.812], [0.640, 0.720, 0.600], [0.703, 0.720, 0.690]),
    row(German, [0.673, 0.630, 0.625], [0.700, 0.580, 0.600], [0.686, 0.604, 0.612]),
    row(Italian, [0.695, 0.661, 0.781], [0.820, 0.820, 0.640], [0.752, 0.732, 0.703]),
    row(Chinese, [0.836, 0.759, 0.878], [0.920, 0.880, 0.860], [0.876, 0.815, 0.869]),
    row(Japanese, [0.800, 0.808, 1.000], [0.720, 0.420, 0.300], [0.758, 0.553, 0.462]),
    row(Korean, [0.809, 0.524, 0.462], [0.760, 0.880, 0.980], [0.784, 0.657, 0.628]),
];

pub const GEMMA_FINETUNED: [ClassRow; 8] = [
    row(EnglishAmerican, [0.643, 0.571, 0.480], [0.720, 0.480, 0.720], [0.679, 0.522, 0.576]),
    row(EnglishBritish, [0.619, 0.790, 0.444], [0.520, 0.300, 0.160], [0.565, 0.435, 0.235]),
    row(French, [0.674, 0.630, 0.773], [0.660, 0.680, 0.680], [0.667, 0.654, 0.723]),
    row(German, [0.708, 0.605, 0.628], [0.680, 0.520, 0.540], [0.694, 0.559, 0.581]),
    row(Italian, [0.796, 0.672, 0.744], [0.780, 0.820, 0.640], [0.788, 0.739, 0.688]),
    row(Chinese, [0.738, 0.656, 0.852], [0.900, 0.840, 0.920], [0.812, 0.737, 0.885]),
    row(Japanese, [0.736, 0.683, 1.000], [0.780, 0.560, 0.340], [0.757, 0.615, 0.508]),
    row(Korean, [0.833, 0.540, 0.434], [0.700, 0.820, 0.920], [0.761, 0.651, 0.590]),
];

pub struct Headline {
    pub model: &'static str,
    pub setting: &'static str,
    pub accuracy: [f64; 3],
    pub f1: [f64; 3],
}

pub const HEADLINES: [Headline; 4] = [
    Headline { model: "qwen3-14b", setting: "few-shot", accuracy: [0.378, 0.181, 0.145], f1: [0.393, 0.137, 0.067] },
    Headline {
        model: "gemma-3-12b-it",
        setting: "few-shot",
        accuracy: [0.304, 0.258, 0.191],
        f1: [0.304, 0.222, 0.111],
    },
    Headline { model: "qwen3-14b", setting: "fine-tuned", accuracy: [0.728, 0.650, 0.633], f1: [0.726, 0.637, 0.623] },
    Headline {
        model: "gemma-3-12b-it",
        setting: "fine-tuned",
        accuracy: [0.718, 0.628, 0.590],
        f1: [0.715, 0.614, 0.598],
    },
];

pub fn headline(model: &str, setting: &str) -> &'static Headline {
    HEADLINES.iter().find(|h| h.model == model && h.setting == setting).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub enum PublishedP {
    /// Printed as "<bound".
    Below(f64),
    Value(f64),
}

pub struct FisherRow {
    pub model: &'static str,
    pub setting: &'static str,
    pub first: Era,
    pub second: Era,
    pub p: PublishedP,
    pub significant: bool,
}

const fn fisher(
    model: &'static str,
    setting: &'static str,
    first: Era,
    second: Era,
    p: PublishedP,
    significant: bool,
) -> FisherRow {
    FisherRow { model, setting, first, second, p, significant }
}

use PublishedP::{Below, Value};

pub const FISHER_ROWS: [FisherRow; 12] = [
    fisher("qwen3-14b", "few-shot", Era::PreNn, Era::PostLlm, Below(0.0001), true),
    fisher("qwen3-14b", "few-shot", Era::PreNn, Era::PreLlm, Below(0.0001), true),
    fisher("qwen3-14b", "few-shot", Era::PreLlm, Era::PostLlm, Value(0.2127), false),
    fisher("gemma-3-12b-it", "few-shot", Era::PreNn, Era::PostLlm, Value(0.0022), true),
    fisher("gemma-3-12b-it", "few-shot", Era::PreNn, Era::PreLlm, Value(0.1568), false),
    fisher("gemma-3-12b-it", "few-shot", Era::PreLlm, Era::PostLlm, Value(0.0272), true),
    fisher("qwen3-14b", "fine-tuned", Era::PreNn, Era::PostLlm, Value(0.0049), true),
    fisher("qwen3-14b", "fine-tuned", Era::PreNn, Era::PreLlm, Value(0.0218), true),
    fisher("qwen3-14b", "fine-tuned", Era::PreLlm, Era::PostLlm, Value(0.6583), false),
    fisher("gemma-3-12b-it", "fine-tuned", Era::PreNn, Era::PostLlm, Value(0.0002), true),
    fisher("gemma-3-12b-it", "fine-tuned", Era::PreNn, Era::PreLlm, Value(0.0083), true),
    fisher("gemma-3-12b-it", "fine-tuned", Era::PreLlm, Era::PostLlm, Value(0.3105), false),
];
