use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Radio,
    Optical,
    Sense,
    Proto,
    Adv,
    Verdict,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Radio => "RADIO",
            Category::Optical => "OPTICAL",
            Category::Sense => "SENSE",
            Category::Proto => "PROTO",
            Category::Adv => "ADV",
            Category::Verdict => "VERDICT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Category::Radio, Category::Optical, Category::Sense, Category::Proto, Category::Adv, Category::Verdict]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

/// One trace line: `time<TAB>category<TAB>actor<TAB>k=v;k=v`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub category: Category,
    pub actor: String,
    pub detail: Vec<(String, String)>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.splitn(4, '\t');
        let time = parts.next()?.parse().ok()?;
        let category = Category::parse(parts.next()?)?;
        let actor = parts.next()?.to_string();
        let detail = parts
            .next()
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<_>>()?;
        Some(Self { time, category, actor, detail })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}\t{}\t{}\t", self.time, self.category.as_str(), self.actor)?;
        for (i, (k, v)) in self.detail.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Field values may not contain the separators.
pub fn clean(v: &str) -> String {
    v.chars().map(|c| if matches!(c, ';' | '=' | '\t' | '\n' | '\r') { '_' } else { c }).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, time: f64, category: Category, actor: &str, detail: &[(&str, String)]) {
        self.records.push(TraceRecord {
            time,
            category,
            actor: actor.to_string(),
            detail: detail.iter().map(|(k, v)| (k.to_string(), clean(v))).collect(),
        });
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Option<Self> {
        Some(Self { records: text.lines().map(TraceRecord::parse).collect::<Option<_>>()? })
    }

    pub fn find<'a>(&'a self, category: Category, event: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.category == category && r.get("event") == Some(event))
    }
}
