//! `key=value` record lines. Values are percent-encoded so a record always
//! fits on one line and splits on single spaces.

use std::collections::HashMap;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

const VALUE: &AsciiSet = &CONTROLS.add(b' ').add(b'=').add(b'%');

#[derive(Debug, Default)]
pub(crate) struct RecordWriter {
    line: String,
}

impl RecordWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        if !self.line.is_empty() {
            self.line.push(' ');
        }
        self.line.push_str(key);
        self.line.push('=');
        self.line
            .extend(utf8_percent_encode(&value.to_string(), VALUE));
        self
    }

    pub fn opt(self, key: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.field(key, v),
            None => self.field(key, ""),
        }
    }

    pub fn finish(mut self) -> String {
        self.line.push('\n');
        self.line
    }
}

#[derive(Debug)]
pub(crate) struct Record {
    fields: HashMap<String, String>,
}

impl Record {
    pub fn parse(line: &str) -> Result<Self, String> {
        let mut fields = HashMap::new();
        for part in line.split(' ').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("field {part:?} has no '='"))?;
            let v = percent_decode_str(v)
                .decode_utf8()
                .map_err(|e| format!("{k}: {e}"))?;
            fields.insert(k.to_string(), v.into_owned());
        }
        Ok(Self { fields })
    }

    pub fn str(&self, key: &str) -> Result<String, String> {
        self.fields
            .get(key)
            .cloned()
            .ok_or_else(|| format!("missing field {key}"))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.str(key)?;
        raw.parse().map_err(|_| format!("field {key}: cannot parse {raw:?}"))
    }

    pub fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.fields.get(key).map(String::as_str) {
            None | Some("") => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_awkward_values() {
        let line = RecordWriter::new()
            .field("id", 3)
            .field("name", "Room 1 = 100% east\nwing")
            .opt("room_id", None::<u64>)
            .finish();
        assert_eq!(line.matches('\n').count(), 1);
        let r = Record::parse(line.trim_end()).unwrap();
        assert_eq!(r.get::<u64>("id").unwrap(), 3);
        assert_eq!(r.str("name").unwrap(), "Room 1 = 100% east\nwing");
        assert_eq!(r.opt::<u64>("room_id").unwrap(), None);
        assert!(r.str("missing").is_err());
    }
}
