//! Market statistics, goods partitions and the three-valued decision type.
//!
//! Every price and quantity is strictly positive. Downstream programs work
//! with logarithms of these numbers, so zero purchases are rejected at
//! construction time instead of being floored; callers clean their data.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Prices and purchased quantities for `T` periods over `n` goods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MarketStatistics<S> {
    prices: Vec<Vec<S>>,
    quantities: Vec<Vec<S>>,
}

impl<S: Scalar> MarketStatistics<S> {
    /// Validates shape and strict positivity. Errors report 1-based rows and
    /// columns in CSV layout (prices first, then quantities).
    pub fn new(prices: Vec<Vec<S>>, quantities: Vec<Vec<S>>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Shape("at least one period is required".into()));
        }
        if prices.len() != quantities.len() {
            return Err(Error::Shape(format!(
                "{} price rows but {} quantity rows",
                prices.len(),
                quantities.len()
            )));
        }
        let goods = prices[0].len();
        if goods == 0 {
            return Err(Error::Shape("at least one good is required".into()));
        }
        for (t, (p, q)) in prices.iter().zip(&quantities).enumerate() {
            if p.len() != goods || q.len() != goods {
                return Err(Error::Shape(format!(
                    "period {} has {} prices and {} quantities, expected {goods}",
                    t + 1,
                    p.len(),
                    q.len()
                )));
            }
            let cells = p.iter().chain(q.iter()).enumerate();
            for (c, &v) in cells {
                if !(v > S::zero()) || !v.is_finite() {
                    return Err(Error::NonpositiveValue {
                        row: t + 1,
                        column: c + 1,
                    });
                }
            }
        }
        Ok(Self { prices, quantities })
    }

    pub fn periods(&self) -> usize {
        self.prices.len()
    }

    pub fn goods(&self) -> usize {
        self.prices[0].len()
    }

    pub fn prices(&self) -> &[Vec<S>] {
        &self.prices
    }

    pub fn quantities(&self) -> &[Vec<S>] {
        &self.quantities
    }

    pub fn price(&self, t: usize) -> &[S] {
        &self.prices[t]
    }

    pub fn quantity(&self, t: usize) -> &[S] {
        &self.quantities[t]
    }

    /// Cost of bundle `q^t` at prices `p^tau`.
    pub fn cost(&self, tau: usize, t: usize) -> S {
        dot(&self.prices[tau], &self.quantities[t])
    }

    /// Own-period expenditure `p^t · q^t`.
    pub fn expenditure(&self, t: usize) -> S {
        self.cost(t, t)
    }

    /// Restriction to the listed goods, in the given order.
    pub fn select_goods(&self, goods: &[usize]) -> Result<Self> {
        let pick = |rows: &[Vec<S>]| -> Vec<Vec<S>> {
            rows.iter()
                .map(|r| goods.iter().map(|&g| r[g]).collect())
                .collect()
        };
        for &g in goods {
            if g >= self.goods() {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    goods: self.goods(),
                });
            }
        }
        Self::new(pick(&self.prices), pick(&self.quantities))
    }

    /// Same prices, different quantities.
    pub fn with_quantities(&self, quantities: Vec<Vec<S>>) -> Result<Self> {
        Self::new(self.prices.clone(), quantities)
    }

    /// Parses the CSV layout `p1,...,pn,q1,...,qn` with one row per period.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::MalformedHeader(e.to_string()))?
            .clone();
        let goods = parse_header(&header)?;
        let width = 2 * goods;

        let mut prices = Vec::new();
        let mut quantities = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(|e| Error::MalformedRow {
                row,
                column: 0,
                reason: e.to_string(),
            })?;
            if record.len() != width {
                return Err(Error::MalformedRow {
                    row,
                    column: record.len().min(width) + 1,
                    reason: format!("expected {width} fields, found {}", record.len()),
                });
            }
            let mut values = Vec::with_capacity(width);
            for (c, field) in record.iter().enumerate() {
                let v: S = field.parse().map_err(|_| Error::MalformedRow {
                    row,
                    column: c + 1,
                    reason: format!("`{field}` is not a decimal number"),
                })?;
                if v.is_nan() || v.is_infinite() {
                    return Err(Error::MalformedRow {
                        row,
                        column: c + 1,
                        reason: format!("`{field}` is not finite"),
                    });
                }
                if v <= S::zero() {
                    return Err(Error::NonpositiveValue { row, column: c + 1 });
                }
                values.push(v);
            }
            quantities.push(values.split_off(goods));
            prices.push(values);
        }
        if prices.is_empty() {
            return Err(Error::Shape("file contains no data rows".into()));
        }
        Self::new(prices, quantities)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let n = self.goods();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("p{i}"))
            .chain((1..=n).map(|i| format!("q{i}")))
            .collect();
        wtr.write_record(&header).map_err(io_err)?;
        for (p, q) in self.prices.iter().zip(&self.quantities) {
            // Display for f32/f64 prints the shortest representation that
            // parses back to the same value.
            let row: Vec<String> = p.iter().chain(q.iter()).map(|v| v.to_string()).collect();
            wtr.write_record(&row).map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn parse_header(header: &csv::StringRecord) -> Result<usize> {
    let fields: Vec<&str> = header.iter().collect();
    if fields.is_empty() || !fields.len().is_multiple_of(2) {
        return Err(Error::MalformedHeader(format!(
            "expected p1..pn,q1..qn, found {} columns",
            fields.len()
        )));
    }
    let n = fields.len() / 2;
    for (i, f) in fields.iter().enumerate() {
        let expected = if i < n {
            format!("p{}", i + 1)
        } else {
            format!("q{}", i - n + 1)
        };
        if !f.eq_ignore_ascii_case(&expected) {
            return Err(Error::MalformedHeader(format!(
                "column {} is `{f}`, expected `{expected}`",
                i + 1
            )));
        }
    }
    Ok(n)
}

/// Reads statistics from a CSV file.
pub fn load_statistics<S: Scalar>(path: impl AsRef<Path>) -> Result<MarketStatistics<S>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::Io(e.to_string()))?;
    MarketStatistics::from_csv(file)
}

/// Writes statistics in the same CSV layout `load_statistics` reads.
pub fn save_statistics<S: Scalar>(stats: &MarketStatistics<S>, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
    stats.to_csv(file)
}

/// Statistics with the goods split into a q-block and a y-block.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedStatistics<S> {
    base: MarketStatistics<S>,
    q_block: Vec<usize>,
    y_block: Vec<usize>,
    q_stats: MarketStatistics<S>,
    y_stats: MarketStatistics<S>,
}

/// Splits off `y_block` (0-based goods indices); the remaining goods, in
/// their original order, form the q-block.
pub fn partition<S: Scalar>(
    stats: &MarketStatistics<S>,
    y_block: &[usize],
) -> Result<PartitionedStatistics<S>> {
    let n = stats.goods();
    if let Some(&index) = y_block.iter().find(|&&g| g >= n) {
        return Err(Error::IndexOutOfRange { index, goods: n });
    }
    let mut y: Vec<usize> = Vec::with_capacity(y_block.len());
    for &g in y_block {
        if !y.contains(&g) {
            y.push(g);
        }
    }
    y.sort_unstable();
    let q: Vec<usize> = (0..n).filter(|g| !y.contains(g)).collect();
    if y.is_empty() || q.is_empty() {
        return Err(Error::EmptyBlock);
    }
    Ok(PartitionedStatistics {
        q_stats: stats.select_goods(&q)?,
        y_stats: stats.select_goods(&y)?,
        base: stats.clone(),
        q_block: q,
        y_block: y,
    })
}

impl<S: Scalar> PartitionedStatistics<S> {
    pub fn base(&self) -> &MarketStatistics<S> {
        &self.base
    }

    pub fn q_block(&self) -> &[usize] {
        &self.q_block
    }

    pub fn y_block(&self) -> &[usize] {
        &self.y_block
    }

    /// Prices `p^t` and quantities `q^t` of the q-block.
    pub fn q_stats(&self) -> &MarketStatistics<S> {
        &self.q_stats
    }

    /// Prices `x^t` and quantities `y^t` of the y-block.
    pub fn y_stats(&self) -> &MarketStatistics<S> {
        &self.y_stats
    }

    pub fn periods(&self) -> usize {
        self.base.periods()
    }

    /// Interleaves both blocks back into the original column order.
    pub fn unpartition(&self) -> MarketStatistics<S> {
        let n = self.base.goods();
        let merge = |qs: &[Vec<S>], ys: &[Vec<S>]| -> Vec<Vec<S>> {
            qs.iter()
                .zip(ys)
                .map(|(qrow, yrow)| {
                    let mut row = vec![S::zero(); n];
                    for (&g, &v) in self.q_block.iter().zip(qrow) {
                        row[g] = v;
                    }
                    for (&g, &v) in self.y_block.iter().zip(yrow) {
                        row[g] = v;
                    }
                    row
                })
                .collect()
        };
        MarketStatistics {
            prices: merge(self.q_stats.prices(), self.y_stats.prices()),
            quantities: merge(self.q_stats.quantities(), self.y_stats.quantities()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::Undecided => "UNDECIDED",
        })
    }
}

/// Outcome of a decision procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Decision<S> {
    pub status: Status,
    pub optimum: Option<S>,
    pub detail: String,
}

impl<S: Scalar> Decision<S> {
    pub fn new(status: Status, optimum: Option<S>, detail: impl Into<String>) -> Self {
        Self {
            status,
            optimum,
            detail: detail.into(),
        }
    }

    pub fn feasible(detail: impl Into<String>) -> Self {
        Self::new(Status::Feasible, None, detail)
    }

    pub fn infeasible(detail: impl Into<String>) -> Self {
        Self::new(Status::Infeasible, None, detail)
    }

    pub fn undecided(detail: impl Into<String>) -> Self {
        Self::new(Status::Undecided, None, detail)
    }

    pub fn with_optimum(mut self, optimum: S) -> Self {
        self.optimum = Some(optimum);
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == Status::Infeasible
    }
}
