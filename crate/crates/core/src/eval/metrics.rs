use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Pixel counts with water as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::InvalidParam("empty confusion".into()));
        }
        Ok(())
    }

    /// Percent IoU of water and non-water; `None` for a class absent from
    /// both prediction and truth.
    pub fn class_iou(&self) -> [Option<f64>; 2] {
        let iou = |hit: u64| {
            let union = hit + self.fp + self.fn_;
            (union > 0).then(|| 100.0 * hit as f64 / union as f64)
        };
        [iou(self.tp), iou(self.tn)]
    }
}

impl Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), Add::add)
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<Confusion> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn pixel_accuracy(c: &Confusion) -> Result<f64> {
    c.nonempty()?;
    Ok(100.0 * (c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn mean_iou(c: &Confusion) -> Result<f64> {
    c.nonempty()?;
    let present: Vec<f64> = c.class_iou().into_iter().flatten().collect();
    if present.is_empty() {
        return Ok(100.0);
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
