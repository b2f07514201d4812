//! Published reference values, shown next to desk-scale results.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperRow {
    pub label: &'static str,
    pub acc: f64,
    pub miou: f64,
}

const fn row(label: &'static str, acc: f64, miou: f64) -> PaperRow {
    PaperRow { label, acc, miou }
}

/// Model × training labels.
pub const TABLE1: [PaperRow; 5] = [
    row("UNet / Coarse", 95.2, 53.8),
    row("Refiner / Coarse", 95.6, 56.5),
    row("Refiner / Coarse+Points", 97.2, 61.8),
    row("UNet / Fine", 97.0, 62.4),
    row("Refiner / Fine", 98.1, 64.9),
];

/// Point dispersion × GPS noise, Refiner on coarse labels.
pub const TABLE2: [PaperRow; 5] = [
    row("No Points", 95.6, 56.5),
    row("Low / Low", 95.9, 59.6),
    row("Low / High", 96.9, 61.0),
    row("High / Low", 97.2, 61.8),
    row("High / High", 97.0, 60.9),
];
