//! Daily OHLCV bars and their CSV form (`date,open,high,low,close,volume`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::normalize_date;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// A validated series: dates strictly increasing, positive prices,
/// `low <= open, close <= high`, non-negative volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OhlcvSeries {
    bars: Vec<Bar>,
}

impl OhlcvSeries {
    pub fn new(bars: Vec<Bar>) -> Result<Self> {
        for (i, b) in bars.iter().enumerate() {
            let bad = |what: &str| Err(Error::InvalidSeries(format!("day {i} ({}): {what}", b.date)));
            let prices = [b.open, b.high, b.low, b.close];
            if prices.iter().chain([&b.volume]).any(|v| !v.is_finite()) {
                return bad("non-finite value");
            }
            if prices.iter().any(|&p| p <= 0.0) {
                return bad("prices must be positive");
            }
            if b.low > b.open.min(b.close) || b.open.max(b.close) > b.high {
                return bad("requires low <= open, close <= high");
            }
            if b.volume < 0.0 {
                return bad("negative volume");
            }
            if i > 0 && bars[i - 1].date >= b.date {
                return bad("dates must be strictly increasing");
            }
        }
        Ok(OhlcvSeries { bars })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<String> {
        self.bars.iter().map(|b| b.date.clone()).collect()
    }

    /// Bars `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::IndexOutOfBounds(format!(
                "slice {start}..{end} of a {}-day series",
                self.len()
            )));
        }
        Ok(OhlcvSeries {
            bars: self.bars[start..end].to_vec(),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date,open,high,low,close,volume\n");
        for b in &self.bars {
            out.push_str(&format!("{},{},{},{},{},{}\n", b.date, b.open, b.high, b.low, b.close, b.volume));
        }
        out
    }
}

#[derive(Deserialize)]
struct RawBar {
    date: String,
    open: String,
    high: String,
    low: String,
    close: String,
    volume: String,
}

pub fn load_ohlcv_csv(path: impl AsRef<Path>) -> Result<OhlcvSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ohlcv_csv(&text)
}

/// Parses OHLCV CSV. Columns are matched by header name, so order is free and
/// extra columns are ignored.
pub fn parse_ohlcv_csv(text: &str) -> Result<OhlcvSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let mut bars = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        let raw: RawBar = rec.deserialize(Some(&headers)).map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        let date = normalize_date(&raw.date).ok_or_else(|| Error::InvalidSeries(format!("row {row}: bad date {:?}", raw.date)))?;
        let num = |name: &str, s: &str| -> Result<f64> {
            let column = headers.iter().position(|h| h == name).map_or(0, |c| c + 1);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseNumber {
                    row,
                    column,
                    value: s.to_string(),
                })
        };
        bars.push(Bar {
            date,
            open: num("open", &raw.open)?,
            high: num("high", &raw.high)?,
            low: num("low", &raw.low)?,
            close: num("close", &raw.close)?,
            volume: num("volume", &raw.volume)?,
        });
    }
    if bars.is_empty() {
        return Err(Error::InvalidSeries("no bars".into()));
    }
    OhlcvSeries::new(bars)
}
