use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub ticker: String,
    pub name: String,
    pub region: String,
    pub sector: String,
}

/// The instrument list used for cross-market assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testbench {
    #[serde(rename = "instrument")]
    pub instruments: Vec<Instrument>,
}

const DEFAULT_TESTBENCH: &[(&str, &str, &str, &str)] = &[
    ("DIA", "Dow Jones", "American", "Trading index"),
    ("SPY", "S&P 500", "American", "Trading index"),
    ("QQQ", "NASDAQ", "American", "Trading index"),
    ("EZU", "FTSE 100", "European", "Trading index"),
    ("EWJ", "Nikkei 225", "Asian", "Trading index"),
    ("AAPL", "Apple", "American", "Technology"),
    ("GOOGL", "Google", "American", "Technology"),
    ("AMZN", "Amazon", "American", "Technology"),
    ("FB", "Facebook", "American", "Technology"),
    ("MSFT", "Microsoft", "American", "Technology"),
    ("TWTR", "Twitter", "American", "Technology"),
    ("NOK", "Nokia", "European", "Technology"),
    ("PHIA.AS", "Philips", "European", "Technology"),
    ("SIE.DE", "Siemens", "European", "Technology"),
    ("6758.T", "Sony", "Asian", "Technology"),
    ("BIDU", "Baidu", "Asian", "Technology"),
    ("0700.HK", "Tencent", "Asian", "Technology"),
    ("BABA", "Alibaba", "Asian", "Technology"),
    ("JPM", "JPMorgan Chase", "American", "Financial services"),
    ("HSBC", "HSBC", "European", "Financial services"),
    ("0939.HK", "CCB", "Asian", "Financial services"),
    ("XOM", "ExxonMobil", "American", "Energy"),
    ("RDSA.AS", "Shell", "European", "Energy"),
    ("PTR", "PetroChina", "Asian", "Energy"),
    ("TSLA", "Tesla", "American", "Automotive"),
    ("VOW3.DE", "Volkswagen", "European", "Automotive"),
    ("7203.T", "Toyota", "Asian", "Automotive"),
    ("KO", "Coca Cola", "American", "Food"),
    ("ABI.BR", "AB InBev", "European", "Food"),
    ("2503.T", "Kirin", "Asian", "Food"),
];

impl Default for Testbench {
    /// Thirty stocks and indices across three regions and six sectors.
    fn default() -> Self {
        Self {
            instruments: DEFAULT_TESTBENCH
                .iter()
                .map(|&(ticker, name, region, sector)| Instrument {
                    ticker: ticker.into(),
                    name: name.into(),
                    region: region.into(),
                    sector: sector.into(),
                })
                .collect(),
        }
    }
}

impl Testbench {
    /// Reads a TOML file of `[[instrument]]` tables.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let tb: Testbench = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if tb.instruments.is_empty() {
            return Err(Error::Config("testbench lists no instruments".into()));
        }
        Ok(tb)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("testbench serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_thirty_instruments() {
        let tb = Testbench::default();
        assert_eq!(tb.instruments.len(), 30);
        assert!(tb.instruments.iter().any(|i| i.ticker == "AAPL"));
    }

    #[test]
    fn toml_round_trip() {
        let tb = Testbench::default();
        assert_eq!(Testbench::from_toml(&tb.to_toml()).unwrap(), tb);
    }

    #[test]
    fn parses_hand_written_file() {
        let text = r#"
[[instrument]]
ticker = "AAPL"
name = "Apple"
region = "American"
sector = "Technology"
"#;
        let tb = Testbench::from_toml(text).unwrap();
        assert_eq!(tb.instruments[0].name, "Apple");
    }
}
