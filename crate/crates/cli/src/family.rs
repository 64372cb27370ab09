//! Parser for density-family strings such as `bump((0,1), 0.5)` or
//! `mixture(0.3*heat_kernel(1), 0.7*gaussian(t=0.2, center=1.5))`.

use entrolab::functionals::DensityFamily;
use entrolab::model_spaces::Point;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("{msg} at offset {pos} in `{input}`")]
pub struct FamilyError {
    pub input: String,
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Num(f64),
    Point(Vec<f64>),
    Family(DensityFamily<f64>),
    Weighted(f64, DensityFamily<f64>),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

pub fn parse_family(src: &str) -> Result<DensityFamily<f64>, FamilyError> {
    let mut p = Parser { src, pos: 0 };
    let fam = p.family()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.fail("trailing input"));
    }
    Ok(fam)
}

impl<'a> Parser<'a> {
    fn fail(&self, msg: impl Into<String>) -> FamilyError {
        FamilyError {
            input: self.src.to_string(),
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), FamilyError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.fail(format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        if len == 0 || !self.rest().starts_with(|c: char| c.is_ascii_alphabetic()) {
            return None;
        }
        let id = &self.rest()[..len];
        self.pos += len;
        Some(id)
    }

    fn number(&mut self) -> Result<f64, FamilyError> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')))
            .unwrap_or(self.rest().len());
        let text = &self.rest()[..len];
        let v = text.parse::<f64>().map_err(|_| self.fail("expected a number"))?;
        self.pos += len;
        Ok(v)
    }

    fn family(&mut self) -> Result<DensityFamily<f64>, FamilyError> {
        let start = self.pos;
        let name = self.ident().ok_or_else(|| self.fail("expected a family name"))?;
        self.expect('(')?;
        let mut positional = Vec::new();
        let mut named = Vec::new();
        if !self.eat(')') {
            loop {
                let save = self.pos;
                match self.ident() {
                    Some(key) if self.eat('=') => named.push((key, self.value()?)),
                    _ => {
                        self.pos = save;
                        positional.push(self.value()?);
                    }
                }
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        let args = Args {
            name,
            positional,
            named,
        };
        args.build().map_err(|msg| FamilyError {
            input: self.src.to_string(),
            pos: start,
            msg,
        })
    }

    fn value(&mut self) -> Result<Value, FamilyError> {
        self.skip_ws();
        if self.eat('(') {
            let mut coords = vec![self.number()?];
            while self.eat(',') {
                coords.push(self.number()?);
            }
            self.expect(')')?;
            return Ok(Value::Point(coords));
        }
        if self.rest().starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Ok(Value::Family(self.family()?));
        }
        let x = self.number()?;
        if self.eat('*') {
            return Ok(Value::Weighted(x, self.family()?));
        }
        Ok(Value::Num(x))
    }
}

struct Args<'a> {
    name: &'a str,
    positional: Vec<Value>,
    named: Vec<(&'a str, Value)>,
}

impl Args<'_> {
    /// Argument `i`, by position or by `key`.
    fn get(&self, i: usize, key: &str) -> Option<&Value> {
        self.named
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
            .or_else(|| self.positional.get(i))
    }

    fn num(&self, i: usize, key: &str) -> Result<f64, String> {
        match self.get(i, key) {
            Some(Value::Num(x)) => Ok(*x),
            Some(_) => Err(format!("{}: `{key}` must be a number", self.name)),
            None => Err(format!("{}: missing `{key}`", self.name)),
        }
    }

    fn point(&self, i: usize, key: &str) -> Result<Option<Point<f64>>, String> {
        match self.get(i, key) {
            Some(Value::Num(x)) => Ok(Some(Point::scalar(*x))),
            Some(Value::Point(c)) => Ok(Some(Point::from_slice(c))),
            Some(_) => Err(format!("{}: `{key}` must be a point", self.name)),
            None => Ok(None),
        }
    }

    fn check_arity(&self, keys: &[&str]) -> Result<(), String> {
        if self.positional.len() > keys.len() {
            return Err(format!("{}: takes at most {} arguments", self.name, keys.len()));
        }
        for (k, _) in &self.named {
            if !keys.contains(k) {
                return Err(format!("{}: unknown argument `{k}`", self.name));
            }
        }
        Ok(())
    }

    fn build(&self) -> Result<DensityFamily<f64>, String> {
        match self.name {
            "gaussian" => {
                self.check_arity(&["t", "center"])?;
                Ok(DensityFamily::Gaussian {
                    t: self.num(0, "t")?,
                    center: self.point(1, "center")?,
                })
            }
            "heat_kernel" => {
                self.check_arity(&["t", "source"])?;
                Ok(DensityFamily::HeatKernel {
                    t: self.num(0, "t")?,
                    source: self.point(1, "source")?,
                })
            }
            "bump" => {
                self.check_arity(&["center", "width"])?;
                Ok(DensityFamily::Bump {
                    center: self.point(0, "center")?,
                    width: self.num(1, "width")?,
                })
            }
            "uniform_ball" => {
                self.check_arity(&["r", "center"])?;
                Ok(DensityFamily::UniformBall {
                    radius: self.num(0, "r")?,
                    center: self.point(1, "center")?,
                })
            }
            "reference" => {
                self.check_arity(&[])?;
                Ok(DensityFamily::Reference)
            }
            "mixture" => {
                if !self.named.is_empty() || self.positional.is_empty() {
                    return Err("mixture: expects one or more `weight*family` terms".into());
                }
                self.positional
                    .iter()
                    .map(|v| match v {
                        Value::Weighted(w, f) => Ok((*w, f.clone())),
                        Value::Family(f) => Ok((1.0, f.clone())),
                        _ => Err("mixture: terms must be families".to_string()),
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(DensityFamily::Mixture)
            }
            other => Err(format!("unknown family `{other}`")),
        }
    }
}

/// Replaces the time parameter of every heat-kernel and Gaussian component.
pub fn with_time(fam: &DensityFamily<f64>, t: f64) -> DensityFamily<f64> {
    match fam {
        DensityFamily::HeatKernel { source, .. } => DensityFamily::HeatKernel { source: source.clone(), t },
        DensityFamily::Gaussian { center, .. } => DensityFamily::Gaussian { center: center.clone(), t },
        DensityFamily::Mixture(parts) => DensityFamily::Mixture(parts.iter().map(|(w, f)| (*w, with_time(f, t))).collect()),
        other => other.clone(),
    }
}
