use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::prelude::*;
use rust_decimal::MathematicalOps;

use super::dates::{date_diff, parse_date, DateUnit};
use super::parser::{BinaryOp, Builtin, Expr, UnaryOp};
use super::stats::{self, round_significant, SesGrid, StdMode};
use super::value::Value;
use super::AggregationError;

pub type Env = BTreeMap<String, Value>;

/// Evaluation settings. Results of inexact operations (division, roots,
/// fractional powers, statistics) are rounded to `precision` significant
/// digits; exact arithmetic is never rounded.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator {
    pub precision: u32,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self { precision: 12 }
    }
}

fn domain(msg: impl Into<String>) -> AggregationError {
    AggregationError::Domain(msg.into())
}

fn type_err(func: &str, want: &str, got: &Value) -> AggregationError {
    AggregationError::Type(format!("{func} expects {want}, got {}", got.type_name()))
}

impl Evaluator {
    pub fn new(precision: u32) -> Self {
        Self { precision }
    }

    fn inexact(&self, d: Decimal) -> Value {
        Value::number(round_significant(d, self.precision))
    }

    pub fn eval(&self, expr: &Expr, env: &Env) -> Result<Value, AggregationError> {
        match expr {
            Expr::Number(d) => Ok(Value::number(*d)),
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| AggregationError::UnboundVariable(name.clone())),
            Expr::List(items) => Ok(Value::List(
                items.iter().map(|e| self.eval(e, env)).collect::<Result<_, _>>()?,
            )),
            Expr::Set(items) => Ok(Value::Set(
                items.iter().map(|e| self.eval(e, env)).collect::<Result<_, _>>()?,
            )),
            Expr::Unary(UnaryOp::Neg, e) => match self.eval(e, env)? {
                Value::Number(d) => Ok(Value::number(-d)),
                other => Err(type_err("negation", "a number", &other)),
            },
            Expr::Binary(op, a, b) => {
                let a = self.eval(a, env)?;
                let b = self.eval(b, env)?;
                self.binary(*op, a, b)
            }
            Expr::Call(f, args) => {
                let args = args
                    .iter()
                    .map(|e| self.eval(e, env))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call(*f, args)
            }
        }
    }

    fn binary(&self, op: BinaryOp, a: Value, b: Value) -> Result<Value, AggregationError> {
        use BinaryOp::*;
        match op {
            Eq => return Ok(Value::Bool(a == b)),
            Ne => return Ok(Value::Bool(a != b)),
            Lt | Le | Gt | Ge => {
                if std::mem::discriminant(&a) != std::mem::discriminant(&b) {
                    return Err(AggregationError::Type(format!(
                        "cannot order {} against {}",
                        a.type_name(),
                        b.type_name()
                    )));
                }
                let ord = a.cmp(&b);
                return Ok(Value::Bool(match op {
                    Lt => ord.is_lt(),
                    Le => ord.is_le(),
                    Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }));
            }
            _ => {}
        }
        match (op, a, b) {
            (Add, Value::Str(x), Value::Str(y)) => Ok(Value::Str(x + &y)),
            (Add, Value::List(mut x), Value::List(y)) => {
                x.extend(y);
                Ok(Value::List(x))
            }
            (op, Value::Number(x), Value::Number(y)) => self.arith(op, x, y),
            (op, x, y) => Err(AggregationError::Type(format!(
                "operator {} not defined for {} and {}",
                op.symbol(),
                x.type_name(),
                y.type_name()
            ))),
        }
    }

    fn arith(&self, op: BinaryOp, x: Decimal, y: Decimal) -> Result<Value, AggregationError> {
        let overflow = || domain(format!("arithmetic overflow in {x} {} {y}", op.symbol()));
        match op {
            BinaryOp::Add => x.checked_add(y).map(Value::number).ok_or_else(overflow),
            BinaryOp::Sub => x.checked_sub(y).map(Value::number).ok_or_else(overflow),
            BinaryOp::Mul => x.checked_mul(y).map(Value::number).ok_or_else(overflow),
            BinaryOp::Div => {
                if y.is_zero() {
                    return Err(AggregationError::DivisionByZero);
                }
                x.checked_div(y).map(|q| self.inexact(q)).ok_or_else(overflow)
            }
            BinaryOp::Pow => self.pow(x, y),
            _ => unreachable!("comparison handled by caller"),
        }
    }

    fn pow(&self, base: Decimal, exp: Decimal) -> Result<Value, AggregationError> {
        if exp.fract().is_zero() && exp.abs() <= Decimal::from(64) {
            let n = exp.to_i64().unwrap_or(0);
            if n < 0 && base.is_zero() {
                return Err(AggregationError::DivisionByZero);
            }
            let mut acc = Decimal::ONE;
            for _ in 0..n.unsigned_abs() {
                acc = acc
                    .checked_mul(base)
                    .ok_or_else(|| domain("power overflows"))?;
            }
            if n < 0 {
                return Ok(self.inexact(Decimal::ONE / acc));
            }
            return Ok(Value::number(acc));
        }
        if base.is_sign_negative() {
            return Err(domain("fractional power of a negative number"));
        }
        let r = base
            .checked_powd(exp)
            .ok_or_else(|| domain("power out of range"))?;
        Ok(self.inexact(r))
    }

    fn call(&self, f: Builtin, args: Vec<Value>) -> Result<Value, AggregationError> {
        let name = f.name();
        match f {
            Builtin::Sum => Ok(Value::number(stats::sum(&numbers(name, &args)?)?)),
            Builtin::Mean => Ok(self.inexact(stats::mean(&numbers(name, &args)?)?)),
            Builtin::Median => Ok(Value::number(stats::median(&numbers(name, &args)?)?)),
            Builtin::Min | Builtin::Max => {
                let items = collection_or_varargs(&args);
                check_homogeneous(name, &items)?;
                let pick = if f == Builtin::Min {
                    items.iter().min()
                } else {
                    items.iter().max()
                };
                pick.cloned().ok_or_else(|| domain(format!("{name} of an empty list")))
            }
            Builtin::Count => {
                let items = args[0]
                    .elements()
                    .ok_or_else(|| type_err(name, "a list or set", &args[0]))?;
                let n = match args.get(1) {
                    Some(needle) => items.iter().filter(|v| *v == needle).count(),
                    None => items.len(),
                };
                Ok(Value::number(Decimal::from(n)))
            }
            Builtin::Sort => {
                let mut items = args[0]
                    .elements()
                    .ok_or_else(|| type_err(name, "a list or set", &args[0]))?;
                check_homogeneous(name, &items)?;
                items.sort();
                match args.get(1) {
                    None => {}
                    Some(Value::Str(s)) if s.eq_ignore_ascii_case("asc") => {}
                    Some(Value::Str(s)) if s.eq_ignore_ascii_case("desc") => items.reverse(),
                    Some(other) => return Err(type_err(name, "\"asc\" or \"desc\"", other)),
                }
                Ok(Value::List(items))
            }
            Builtin::TopK => {
                let mut items = args[0]
                    .elements()
                    .ok_or_else(|| type_err(name, "a list or set", &args[0]))?;
                check_homogeneous(name, &items)?;
                let k = non_negative_int(name, &args[1])?;
                items.sort_by(|a, b| b.cmp(a));
                items.truncate(k);
                Ok(Value::List(items))
            }
            Builtin::VarP => Ok(self.inexact(stats::variance(&numbers(name, &args)?, StdMode::Population)?)),
            Builtin::VarS => Ok(self.inexact(stats::variance(&numbers(name, &args)?, StdMode::Sample)?)),
            Builtin::StdP => Ok(self.inexact(stats::stddev(&numbers(name, &args)?, StdMode::Population)?)),
            Builtin::StdS => Ok(self.inexact(stats::stddev(&numbers(name, &args)?, StdMode::Sample)?)),
            Builtin::Pearson => {
                let xs = numbers(name, &args[..1])?;
                let ys = numbers(name, &args[1..])?;
                Ok(self.inexact(stats::pearson(&xs, &ys)?))
            }
            Builtin::GrowthRate => {
                let start = number(name, &args[0])?;
                let end = number(name, &args[1])?;
                let periods = match args.get(2) {
                    Some(v) => Some(
                        u32::try_from(non_negative_int(name, v)?)
                            .map_err(|_| domain("too many periods"))?,
                    ),
                    None => None,
                };
                Ok(self.inexact(stats::growth_rate(start, end, periods)?))
            }
            Builtin::SesForecast => {
                let xs = numbers(name, &args[..1])?;
                let alpha = number(name, &args[1])?;
                Ok(self.inexact(stats::ses_forecast(&xs, alpha)?))
            }
            Builtin::SesBestAlpha => {
                let xs = numbers(name, &args[..1])?;
                let grid = match args.len() {
                    1 => SesGrid::default(),
                    4 => SesGrid {
                        lo: number(name, &args[1])?,
                        hi: number(name, &args[2])?,
                        step: number(name, &args[3])?,
                    },
                    _ => return Err(domain("ses_best_alpha takes a series and optionally lo, hi, step")),
                };
                let fit = stats::ses_best_alpha(&xs, &grid)?;
                Ok(Value::List(vec![
                    Value::number(fit.alpha),
                    self.inexact(fit.mse),
                    self.inexact(fit.next_forecast),
                ]))
            }
            Builtin::Union | Builtin::Intersection | Builtin::Difference => {
                let a = as_set(name, &args[0])?;
                let b = as_set(name, &args[1])?;
                let out: BTreeSet<Value> = match f {
                    Builtin::Union => a.union(&b).cloned().collect(),
                    Builtin::Intersection => a.intersection(&b).cloned().collect(),
                    _ => a.difference(&b).cloned().collect(),
                };
                Ok(Value::Set(out))
            }
            Builtin::Member => {
                let items = args[1]
                    .elements()
                    .ok_or_else(|| type_err(name, "a list or set", &args[1]))?;
                Ok(Value::Bool(items.contains(&args[0])))
            }
            Builtin::Date => match &args[0] {
                Value::Str(s) => Ok(Value::Date(parse_date(s)?)),
                Value::Date(d) => Ok(Value::Date(*d)),
                other => Err(type_err(name, "an ISO date string", other)),
            },
            Builtin::DateDiff => {
                let a = as_date(name, &args[0])?;
                let b = as_date(name, &args[1])?;
                let unit = match args.get(2) {
                    Some(Value::Str(s)) => DateUnit::parse(s)?,
                    Some(other) => return Err(type_err(name, "\"days\" or \"years\"", other)),
                    None => DateUnit::Days,
                };
                Ok(Value::number(Decimal::from(date_diff(a, b, unit))))
            }
            Builtin::Round => {
                let x = number(name, &args[0])?;
                let k = match args.get(1) {
                    Some(v) => non_negative_int(name, v)?,
                    None => 0,
                };
                let k = u32::try_from(k.min(28)).unwrap_or(28);
                Ok(Value::number(
                    x.round_dp_with_strategy(k, RoundingStrategy::MidpointAwayFromZero),
                ))
            }
            Builtin::Abs => Ok(Value::number(number(name, &args[0])?.abs())),
        }
    }
}

fn number(func: &str, v: &Value) -> Result<Decimal, AggregationError> {
    v.as_number().ok_or_else(|| type_err(func, "a number", v))
}

fn non_negative_int(func: &str, v: &Value) -> Result<usize, AggregationError> {
    let d = number(func, v)?;
    if !d.fract().is_zero() || d.is_sign_negative() {
        return Err(domain(format!("{func} expects a non-negative integer, got {d}")));
    }
    d.to_usize().ok_or_else(|| domain(format!("{func}: integer {d} too large")))
}

/// A single list/set argument is unpacked; otherwise the arguments themselves
/// form the collection.
fn collection_or_varargs(args: &[Value]) -> Vec<Value> {
    match args {
        [single] => single.elements().unwrap_or_else(|| vec![single.clone()]),
        many => many.to_vec(),
    }
}

fn numbers(func: &str, args: &[Value]) -> Result<Vec<Decimal>, AggregationError> {
    collection_or_varargs(args)
        .iter()
        .map(|v| number(func, v))
        .collect()
}

fn check_homogeneous(func: &str, items: &[Value]) -> Result<(), AggregationError> {
    if let Some(first) = items.first() {
        if let Some(bad) = items
            .iter()
            .find(|v| std::mem::discriminant(*v) != std::mem::discriminant(first))
        {
            return Err(AggregationError::Type(format!(
                "{func} needs values of one type, found {} and {}",
                first.type_name(),
                bad.type_name()
            )));
        }
    }
    Ok(())
}

fn as_set(func: &str, v: &Value) -> Result<BTreeSet<Value>, AggregationError> {
    match v {
        Value::Set(s) => Ok(s.clone()),
        Value::List(xs) => Ok(xs.iter().cloned().collect()),
        other => Err(type_err(func, "a list or set", other)),
    }
}

fn as_date(func: &str, v: &Value) -> Result<chrono::NaiveDate, AggregationError> {
    match v {
        Value::Date(d) => Ok(*d),
        Value::Str(s) => parse_date(s),
        other => Err(type_err(func, "a date", other)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate, parse_expr};
    use super::*;

    fn run(src: &str) -> Value {
        evaluate(src, &Env::new()).unwrap_or_else(|e| panic!("{src}: {e}"))
    }

    fn n(s: &str) -> Value {
        Value::Number(Decimal::from_str_exact(s).unwrap())
    }

    #[test]
    fn basic_builtins() {
        assert_eq!(run("mean([2,4,6])"), n("4"));
        assert_eq!(run("intersection({1,2},{2,3})").to_string(), "{2}");
        assert_eq!(run("union([1,2],{2,3})").to_string(), "{1, 2, 3}");
        assert_eq!(run("difference({1,2,3},{2})").to_string(), "{1, 3}");
        assert_eq!(run("topk([5,1,9], 2)").to_string(), "[9, 5]");
        assert_eq!(run("sort([3,1,2], \"desc\")").to_string(), "[3, 2, 1]");
        assert_eq!(run("count([1,2,2,3], 2)"), n("2"));
        assert_eq!(run("member(2, [1,2])"), Value::Bool(true));
        assert_eq!(run("max(3, 7, 5)"), n("7"));
        assert_eq!(run("min([\"b\", \"a\"])"), Value::Str("a".into()));
        assert_eq!(run("std_p([2,4,4,4,5,5,7,9])"), n("2"));
        assert_eq!(run("round(2 / 3, 3)"), n("0.667"));
        assert_eq!(run("date_diff(\"2020-02-28\", \"2021-03-01\", \"days\")"), n("367"));
        assert_eq!(run("date_diff(date(\"1993-01-01\"), date(\"1994-01-01\"), \"years\")"), n("1"));
        assert_eq!(run("2 ^ 10"), n("1024"));
        assert_eq!(run("1 + 2 * 3 == 7"), Value::Bool(true));
        assert_eq!(run("median([1, 5, 2, 8])"), n("3.5"));
    }

    #[test]
    fn division_is_rounded_to_precision() {
        assert_eq!(run("1 / 3"), n("0.333333333333"));
        let coarse = Evaluator::new(3).eval(&parse_expr("1 / 3").unwrap(), &Env::new()).unwrap();
        assert_eq!(coarse, n("0.333"));
    }

    #[test]
    fn ses_best_alpha_returns_triple() {
        let v = run("ses_best_alpha([1,2,3,4,5,6,7,8,9,10])");
        let items = v.elements().unwrap();
        assert_eq!(items[0], n("0.99"));
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            evaluate("x + 1", &Env::new()),
            Err(AggregationError::UnboundVariable(ref v)) if v == "x"
        ));
        assert!(matches!(evaluate("1 / 0", &Env::new()), Err(AggregationError::DivisionByZero)));
        assert!(matches!(evaluate("pearson([1],[2])", &Env::new()), Err(AggregationError::Domain(_))));
        assert!(matches!(evaluate("date(\"2020-02-30\")", &Env::new()), Err(AggregationError::DateParse(_))));
        assert!(matches!(evaluate("\"a\" < 1", &Env::new()), Err(AggregationError::Type(_))));
        assert!(evaluate("mean([])", &Env::new()).is_err());
    }

    #[test]
    fn variables_resolve_from_env() {
        let mut env = Env::new();
        env.insert("xs".into(), run("[1, 2, 3, 4]"));
        env.insert("ys".into(), run("[2, 4, 6, 8]"));
        assert_eq!(evaluate("pearson(xs, ys)", &env).unwrap(), n("1"));
    }
}
