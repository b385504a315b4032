//! Report model shared by all subcommands. Every number carries a unit.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value as Json};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Clone, Debug)]
pub enum Value {
    Num(f64, String),
    Bool(bool),
    Text(String),
}

pub enum Cell {
    Num(f64),
    Text(String),
}

pub struct Table {
    pub name: String,
    /// (column name, unit); unit is empty for text columns
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

pub struct Section {
    pub name: String,
    pub fields: Vec<(String, Value)>,
}

/// Unit conversion for entropic quantities (nats by default, bits with --bits).
#[derive(Clone, Copy)]
pub struct Units {
    pub bits: bool,
}

impl Units {
    pub fn info(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    pub fn rate_unit(&self) -> &'static str {
        if self.bits {
            "bits^1/2"
        } else {
            "nats^1/2"
        }
    }

    pub fn conv(&self, x: f64) -> f64 {
        if self.bits {
            x / std::f64::consts::LN_2
        } else {
            x
        }
    }

    /// √2·D/√η carries one square root of the information unit.
    pub fn conv_rate(&self, x: f64) -> f64 {
        if self.bits {
            x / std::f64::consts::LN_2.sqrt()
        } else {
            x
        }
    }

    pub fn ent(&self, x: f64) -> Value {
        Value::Num(self.conv(x), self.info().into())
    }
}

pub fn num(x: f64, unit: &str) -> Value {
    Value::Num(x, unit.into())
}

pub fn count(x: usize) -> Value {
    Value::Num(x as f64, "count".into())
}

pub fn text(s: impl Into<String>) -> Value {
    Value::Text(s.into())
}

enum Block {
    Section(Section),
    Table(Table),
}

/// Sections and tables, rendered in the order they were added.
pub struct Report {
    pub command: String,
    blocks: Vec<Block>,
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn json_num(x: f64) -> Json {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt_num(x))
    }
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            blocks: Vec::new(),
        }
    }

    pub fn section(&mut self, name: &str, fields: Vec<(&str, Value)>) {
        self.blocks.push(Block::Section(Section {
            name: name.into(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }));
    }

    pub fn table(&mut self, table: Table) {
        self.blocks.push(Block::Table(table));
    }

    pub fn header() -> String {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        format!("# covsense {} generated_unix={secs}", env!("CARGO_PKG_VERSION"))
    }

    /// Everything after the header line; identical for identical inputs.
    pub fn body(&self, format: Format) -> String {
        match format {
            Format::Text => self.text_body(),
            Format::Machine => {
                let mut s = serde_json::to_string_pretty(&self.json()).expect("report serialises");
                s.push('\n');
                s
            }
        }
    }

    fn text_body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        for block in &self.blocks {
            match block {
                Block::Section(sec) => write_section(&mut out, sec),
                Block::Table(t) => write_table(&mut out, t),
            }
        }
        out
    }

    /// Sections and tables are keyed by name; arrays keep the text order.
    fn json(&self) -> Json {
        let mut sections = Map::new();
        let mut tables = Map::new();
        let mut order = Vec::new();
        for block in &self.blocks {
            match block {
                Block::Section(sec) => {
                    let mut m = Map::new();
                    for (k, v) in &sec.fields {
                        let j = match v {
                            Value::Num(x, unit) => json!({ "value": json_num(*x), "unit": unit }),
                            Value::Bool(b) => json!(b),
                            Value::Text(t) => json!(t),
                        };
                        m.insert(k.clone(), j);
                    }
                    order.push(json!(sec.name));
                    sections.insert(sec.name.clone(), Json::Object(m));
                }
                Block::Table(t) => {
                    let columns: Vec<Json> =
                        t.columns.iter().map(|(n, u)| json!({ "name": n, "unit": u })).collect();
                    let rows: Vec<Json> = t
                        .rows
                        .iter()
                        .map(|r| Json::Array(r.iter().map(cell_json).collect()))
                        .collect();
                    order.push(json!(t.name));
                    tables.insert(t.name.clone(), json!({ "columns": columns, "rows": rows }));
                }
            }
        }
        json!({
            "command": self.command,
            "order": order,
            "sections": Json::Object(sections),
            "tables": Json::Object(tables),
        })
    }
}

fn cell_json(c: &Cell) -> Json {
    match c {
        Cell::Num(x) => json_num(*x),
        Cell::Text(s) => json!(s),
    }
}

fn write_section(out: &mut String, sec: &Section) {
    let _ = writeln!(out, "\n[{}]", sec.name);
    let width = sec.fields.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    for (k, v) in &sec.fields {
        let line = match v {
            Value::Num(x, unit) => format!("{k:<width$}  {:<24}  {unit}", fmt_num(*x)),
            Value::Bool(b) => format!("{k:<width$}  {b}"),
            Value::Text(t) => format!("{k:<width$}  {t}"),
        };
        let _ = writeln!(out, "{}", line.trim_end());
    }
}

/// CSV with the unit in each header cell.
fn write_table(out: &mut String, t: &Table) {
    let _ = writeln!(out, "\n[{}]", t.name);
    let head: Vec<String> = t
        .columns
        .iter()
        .map(|(n, u)| if u.is_empty() { n.clone() } else { format!("{n} [{u}]") })
        .collect();
    let _ = writeln!(out, "{}", head.join(","));
    for row in &t.rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(x) => fmt_num(*x),
                Cell::Text(s) => csv_field(s),
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
