//! Per-record feature CSVs: `record,label,<feature columns>`, preceded by a
//! `# layout=<version>` comment line. Floats are written in shortest
//! round-trip form, so reading a file back yields bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::record_io::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub layout: String,
    pub names: Vec<String>,
    pub records: Vec<String>,
    pub labels: Vec<Option<Label>>,
    pub rows: Matrix,
}

impl FeatureTable {
    pub fn new(layout: &str, names: Vec<String>) -> Self {
        let width = names.len();
        Self {
            layout: layout.to_string(),
            names,
            records: Vec::new(),
            labels: Vec::new(),
            rows: Matrix::empty(width),
        }
    }

    pub fn push(&mut self, record: &str, label: Option<Label>, values: &[f64]) -> Result<()> {
        self.rows.push_row(values)?;
        self.records.push(record.to_string());
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, record: &str) -> Option<usize> {
        self.records.iter().position(|r| r == record)
    }

    /// Reorders rows by record name.
    pub fn sort_by_record(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.records[a].cmp(&self.records[b]));
        self.rows = self.rows.select_rows(&order);
        self.records = order.iter().map(|&i| self.records[i].clone()).collect();
        self.labels = order.iter().map(|&i| self.labels[i]).collect();
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# layout={}", self.layout).map_err(|e| Error::io("<feature table>", e))?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["record".to_string(), "label".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut fields = Vec::with_capacity(header.len());
        for (i, record) in self.records.iter().enumerate() {
            fields.clear();
            fields.push(record.clone());
            fields.push(self.labels[i].map_or(String::new(), |l| l.to_string()));
            fields.extend(self.rows.row(i).iter().map(|v| v.to_string()));
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io("<feature table>", e))?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut buf = BufReader::new(reader);
        let mut first = String::new();
        buf.read_line(&mut first).map_err(|e| Error::io("<feature table>", e))?;
        let layout = first
            .trim_end()
            .strip_prefix("# layout=")
            .ok_or_else(|| Error::parse(1, "missing `# layout=` line"))?
            .to_string();
        let mut r = csv::ReaderBuilder::new().from_reader(buf);
        let header = r.headers()?.clone();
        if header.get(0) != Some("record") || header.get(1) != Some("label") {
            return Err(Error::parse(2, "header must start with record,label"));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut table = FeatureTable::new(&layout, names);
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 3;
            let label = match rec.get(1).unwrap_or("") {
                "" => None,
                s => Some(s.parse::<Label>()?),
            };
            values.clear();
            for field in rec.iter().skip(2) {
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("bad number {field:?}")))?,
                );
            }
            table
                .push(rec.get(0).unwrap_or(""), label, &values)
                .map_err(|_| Error::parse(line, format!("expected {} values", table.names.len())))?;
        }
        Ok(table)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(f)
    }
}
