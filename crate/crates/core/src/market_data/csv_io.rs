use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{AssetSeries, KlineRecord};
use crate::error::{Error, Result};

pub const KLINE_CSV_HEADER: [&str; 10] = [
    "timestamp",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "num_trades",
    "quote_volume",
    "taker_buy_base",
    "taker_buy_quote",
];

/// Parses `<SYMBOL>.csv`; the symbol is taken from the file stem.
pub fn parse_kline_csv(path: &Path) -> Result<AssetSeries> {
    let symbol = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Argument(format!("cannot derive symbol from {}", path.display())))?
        .to_string();
    let file = File::open(path)?;
    read_kline_csv(symbol, file)
}

pub fn read_kline_csv<R: Read>(symbol: impl Into<String>, reader: R) -> Result<AssetSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().ne(KLINE_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                KLINE_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != KLINE_CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 10 fields, found {}", row.len()),
            });
        }
        let timestamp: i64 = row[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid timestamp `{}`", &row[0]),
        })?;
        let mut values = [0.0f64; 9];
        for (k, v) in values.iter_mut().enumerate() {
            let field = &row[k + 1];
            *v = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {} `{field}`", KLINE_CSV_HEADER[k + 1]),
            })?;
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("{} must be finite and non-negative", KLINE_CSV_HEADER[k + 1]),
                });
            }
        }
        if let Some(prev) = records.last().map(|r: &KlineRecord| r.timestamp) {
            if timestamp == prev {
                return Err(Error::DuplicateTimestamp { line, timestamp });
            }
            if timestamp < prev {
                return Err(Error::Ordering {
                    line,
                    previous: prev,
                    timestamp,
                });
            }
        }
        records.push(KlineRecord {
            timestamp,
            open: values[0],
            high: values[1],
            low: values[2],
            close: values[3],
            volume: values[4],
            num_trades: values[5],
            quote_volume: values[6],
            taker_buy_base: values[7],
            taker_buy_quote: values[8],
        });
    }
    AssetSeries::new(symbol, records)
}

/// Writes the 10-column CSV. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_kline_csv<W: Write>(series: &AssetSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(KLINE_CSV_HEADER).map_err(|e| csv_error(e, 0))?;
    for r in series.records() {
        let mut fields = vec![r.timestamp.to_string()];
        fields.extend(r.features().iter().map(|v| v.to_string()));
        wtr.write_record(&fields).map_err(|e| csv_error(e, 0))?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_error(err: csv::Error, fallback_line: u64) -> Error {
    let line = err
        .position()
        .map(|p| p.line())
        .unwrap_or(fallback_line);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::MINUTE_MS;

    const HEADER: &str =
        "timestamp,open,high,low,close,volume,num_trades,quote_volume,taker_buy_base,taker_buy_quote\n";

    fn row(ts: i64) -> String {
        format!("{ts},1.5,2,1,1.75,100,7,160.25,50,80.125\n")
    }

    #[test]
    fn three_rows() {
        let text = format!("{HEADER}{}{}{}", row(0), row(MINUTE_MS), row(2 * MINUTE_MS));
        let s = read_kline_csv("BTCUSDT", text.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.symbol(), "BTCUSDT");
        assert_eq!(s.records()[1].quote_volume, 160.25);
        assert_eq!(s.listed_at(), Some(0));
    }

    #[test]
    fn gap_reports_missing_minute() {
        let t = 1_500_000_000_000i64 - 1_500_000_000_000 % MINUTE_MS;
        let text = format!("{HEADER}{}{}{}", row(t), row(t + 60_000), row(t + 180_000));
        match read_kline_csv("X", text.as_bytes()) {
            Err(Error::Gap {
                first_missing,
                last_missing,
            }) => {
                assert_eq!(first_missing, t + 120_000);
                assert_eq!(last_missing, t + 120_000);
            }
            other => panic!("expected gap, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = format!("{HEADER}{}0,abc,1,1,1,1,1,1,1,1\n", row(-MINUTE_MS));
        match read_kline_csv("X", text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("open"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "time,open\n0,1\n";
        assert!(matches!(
            read_kline_csv("X", text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_order_and_duplicate_rows() {
        let text = format!("{HEADER}{}{}", row(MINUTE_MS), row(0));
        assert!(matches!(
            read_kline_csv("X", text.as_bytes()),
            Err(Error::Ordering { line: 3, .. })
        ));
        let text = format!("{HEADER}{}{}", row(0), row(0));
        assert!(matches!(
            read_kline_csv("X", text.as_bytes()),
            Err(Error::DuplicateTimestamp { line: 3, .. })
        ));
    }

    #[test]
    fn negative_values_are_rejected() {
        let text = format!("{HEADER}0,1,1,1,1,-1,1,1,1,1\n");
        assert!(matches!(
            read_kline_csv("X", text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
