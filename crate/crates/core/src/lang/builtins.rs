use std::cmp::Ordering;

use super::interp::{ErrorKind, Fault};
use super::value::Value;

pub const BUILTINS: &[&str] = &["abs", "len", "min", "max", "sum", "range", "sorted", "str", "int", "float"];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

fn type_err(msg: impl Into<String>) -> Fault {
    Fault::error(ErrorKind::TypeError, msg)
}

fn value_err(msg: impl Into<String>) -> Fault {
    Fault::error(ErrorKind::ValueError, msg)
}

fn arity(name: &str, args: &[Value], min: usize, max: usize) -> Result<(), Fault> {
    if args.len() < min || args.len() > max {
        let expected = if min == max { format!("{min}") } else { format!("{min} to {max}") };
        return Err(type_err(format!("{name}() takes {expected} arguments ({} given)", args.len())));
    }
    Ok(())
}

/// Items of an iterable value (lists and strings).
pub fn iterate(v: &Value) -> Result<Vec<Value>, Fault> {
    match v {
        Value::List(items) => Ok(items.as_ref().clone()),
        Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
        other => Err(type_err(format!("'{}' object is not iterable", other.type_name()))),
    }
}

pub fn compare(a: &Value, b: &Value) -> Result<Ordering, Fault> {
    a.lang_cmp(b).ok_or_else(|| {
        type_err(format!("'<' not supported between instances of '{}' and '{}'", a.type_name(), b.type_name()))
    })
}

/// Calls a builtin. `charge` is invoked with the number of elements a call
/// touches so the caller can account interpreter steps.
pub fn call_builtin(name: &str, args: Vec<Value>, charge: &mut dyn FnMut(u64) -> Result<(), Fault>) -> Result<Value, Fault> {
    match name {
        "abs" => {
            arity(name, &args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or_else(overflow),
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                other => Err(type_err(format!("bad operand type for abs(): '{}'", other.type_name()))),
            }
        }
        "len" => {
            arity(name, &args, 1, 1)?;
            match &args[0] {
                Value::List(items) => Ok(Value::Int(items.len() as i64)),
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                other => Err(type_err(format!("object of type '{}' has no len()", other.type_name()))),
            }
        }
        "min" | "max" => {
            if args.is_empty() {
                return Err(type_err(format!("{name} expected at least 1 argument, got 0")));
            }
            let items = if args.len() == 1 { iterate(&args[0])? } else { args };
            charge(items.len() as u64)?;
            let mut iter = items.into_iter();
            let Some(mut best) = iter.next() else {
                return Err(value_err(format!("{name}() arg is an empty sequence")));
            };
            for item in iter {
                let ord = compare(&item, &best)?;
                let better = if name == "min" { ord == Ordering::Less } else { ord == Ordering::Greater };
                if better {
                    best = item;
                }
            }
            Ok(best)
        }
        "sum" => {
            arity(name, &args, 1, 2)?;
            let items = iterate(&args[0])?;
            charge(items.len() as u64)?;
            let mut acc = args.get(1).cloned().unwrap_or(Value::Int(0));
            for item in items {
                acc = super::interp::arith(super::ast::BinOp::Add, &acc, &item)?;
            }
            Ok(acc)
        }
        "range" => {
            arity(name, &args, 1, 3)?;
            let ints: Vec<i64> = args
                .iter()
                .map(|a| a.as_int().ok_or_else(|| type_err(format!("'{}' object cannot be interpreted as an integer", a.type_name()))))
                .collect::<Result<_, _>>()?;
            let (start, stop, step) = match ints.as_slice() {
                [stop] => (0, *stop, 1),
                [start, stop] => (*start, *stop, 1),
                [start, stop, step] => (*start, *stop, *step),
                _ => unreachable!("arity checked"),
            };
            if step == 0 {
                return Err(value_err("range() arg 3 must not be zero"));
            }
            let count = if step > 0 {
                if stop > start { ((stop as i128 - start as i128 + step as i128 - 1) / step as i128) as u64 } else { 0 }
            } else if start > stop {
                ((start as i128 - stop as i128 + (-(step as i128)) - 1) / (-(step as i128))) as u64
            } else {
                0
            };
            charge(count)?;
            let mut out = Vec::with_capacity(count as usize);
            let mut cur = start as i128;
            for _ in 0..count {
                out.push(Value::Int(cur as i64));
                cur += step as i128;
            }
            Ok(Value::list(out))
        }
        "sorted" => {
            arity(name, &args, 1, 1)?;
            let mut items = iterate(&args[0])?;
            charge(items.len() as u64)?;
            let mut failure = None;
            items.sort_by(|a, b| match compare(a, b) {
                Ok(o) => o,
                Err(e) => {
                    failure.get_or_insert(e);
                    Ordering::Equal
                }
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(Value::list(items)),
            }
        }
        "str" => {
            arity(name, &args, 0, 1)?;
            Ok(match args.first() {
                None => Value::Str(String::new()),
                Some(Value::Str(s)) => Value::Str(s.clone()),
                Some(other) => Value::Str(other.render()),
            })
        }
        "int" => {
            arity(name, &args, 0, 1)?;
            match args.first() {
                None => Ok(Value::Int(0)),
                Some(Value::Int(i)) => Ok(Value::Int(*i)),
                Some(Value::Bool(b)) => Ok(Value::Int(*b as i64)),
                Some(Value::Float(f)) => {
                    if f.is_nan() {
                        Err(value_err("cannot convert float NaN to integer"))
                    } else if f.is_infinite() || f.trunc().abs() >= 9.223_372_036_854_776e18 {
                        Err(Fault::error(ErrorKind::OverflowError, "cannot convert float to integer"))
                    } else {
                        Ok(Value::Int(f.trunc() as i64))
                    }
                }
                Some(Value::Str(s)) => {
                    let t = s.trim().replace('_', "");
                    t.parse::<i64>()
                        .map(Value::Int)
                        .map_err(|_| value_err(format!("invalid literal for int() with base 10: {}", Value::Str(s.clone()))))
                }
                Some(other) => Err(type_err(format!("int() argument must be a string or a number, not '{}'", other.type_name()))),
            }
        }
        "float" => {
            arity(name, &args, 0, 1)?;
            match args.first() {
                None => Ok(Value::Float(0.0)),
                Some(v @ (Value::Int(_) | Value::Bool(_) | Value::Float(_))) => Ok(Value::Float(v.as_f64().unwrap())),
                Some(Value::Str(s)) => {
                    let t = s.trim().to_ascii_lowercase();
                    let parsed = match t.as_str() {
                        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
                        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
                        "nan" | "+nan" | "-nan" => Some(f64::NAN),
                        _ if t.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | '+' | '-'))
                            && t.chars().any(|c| c.is_ascii_digit()) =>
                        {
                            t.parse::<f64>().ok()
                        }
                        _ => None,
                    };
                    parsed
                        .map(Value::Float)
                        .ok_or_else(|| value_err(format!("could not convert string to float: {}", Value::Str(s.clone()))))
                }
                Some(other) => Err(type_err(format!("float() argument must be a string or a number, not '{}'", other.type_name()))),
            }
        }
        _ => Err(Fault::error(ErrorKind::NameError, format!("name '{name}' is not defined"))),
    }
}

fn overflow() -> Fault {
    Fault::error(ErrorKind::OverflowError, "integer overflow")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(name: &str, args: Vec<Value>) -> Result<Value, Fault> {
        call_builtin(name, args, &mut |_| Ok(()))
    }

    #[test]
    fn float_accepts_infinity_strings() {
        assert_eq!(call("float", vec![Value::Str("inf".into())]).unwrap(), Value::Float(f64::INFINITY));
        assert_eq!(call("float", vec![Value::Str("-inf".into())]).unwrap(), Value::Float(f64::NEG_INFINITY));
        assert!(call("float", vec![Value::Str("abc".into())]).is_err());
    }

    #[test]
    fn range_forms() {
        assert_eq!(call("range", vec![Value::Int(3)]).unwrap().render(), "[0, 1, 2]");
        assert_eq!(call("range", vec![Value::Int(5), Value::Int(0), Value::Int(-2)]).unwrap().render(), "[5, 3, 1]");
        assert_eq!(call("range", vec![Value::Int(2), Value::Int(2)]).unwrap().render(), "[]");
    }

    #[test]
    fn min_max_sorted() {
        let xs = Value::list(vec![Value::Int(3), Value::Int(-1), Value::Int(2)]);
        assert_eq!(call("min", vec![xs.clone()]).unwrap(), Value::Int(-1));
        assert_eq!(call("max", vec![Value::Int(1), Value::Float(2.5)]).unwrap(), Value::Float(2.5));
        assert_eq!(call("sorted", vec![xs]).unwrap().render(), "[-1, 2, 3]");
        assert!(call("min", vec![Value::list(vec![])]).is_err());
    }

    #[test]
    fn conversions() {
        assert_eq!(call("int", vec![Value::Float(-3.7)]).unwrap(), Value::Int(-3));
        assert_eq!(call("int", vec![Value::Str(" 42 ".into())]).unwrap(), Value::Int(42));
        assert_eq!(call("str", vec![Value::Int(-33)]).unwrap(), Value::Str("-33".into()));
        assert_eq!(call("abs", vec![Value::Int(-33)]).unwrap(), Value::Int(33));
    }
}
