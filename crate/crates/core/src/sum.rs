//! Compensated summation for the |V|-sized base sums.

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
pub(crate) fn neumaier<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = Neumaier::default();
    for x in iter {
        acc.add(x);
    }
    acc.total()
}
