use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;

use super::value::write_str_literal;
use super::AggregationError;

/// Functions known to the evaluator. Names outside this table are rejected
/// while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Sum,
    Mean,
    Median,
    Min,
    Max,
    Count,
    Sort,
    TopK,
    VarP,
    VarS,
    StdP,
    StdS,
    Pearson,
    GrowthRate,
    SesForecast,
    SesBestAlpha,
    Union,
    Intersection,
    Difference,
    Member,
    Date,
    DateDiff,
    Round,
    Abs,
}

impl Builtin {
    pub const ALL: [Builtin; 24] = [
        Builtin::Sum,
        Builtin::Mean,
        Builtin::Median,
        Builtin::Min,
        Builtin::Max,
        Builtin::Count,
        Builtin::Sort,
        Builtin::TopK,
        Builtin::VarP,
        Builtin::VarS,
        Builtin::StdP,
        Builtin::StdS,
        Builtin::Pearson,
        Builtin::GrowthRate,
        Builtin::SesForecast,
        Builtin::SesBestAlpha,
        Builtin::Union,
        Builtin::Intersection,
        Builtin::Difference,
        Builtin::Member,
        Builtin::Date,
        Builtin::DateDiff,
        Builtin::Round,
        Builtin::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Sum => "sum",
            Builtin::Mean => "mean",
            Builtin::Median => "median",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Count => "count",
            Builtin::Sort => "sort",
            Builtin::TopK => "topk",
            Builtin::VarP => "var_p",
            Builtin::VarS => "var_s",
            Builtin::StdP => "std_p",
            Builtin::StdS => "std_s",
            Builtin::Pearson => "pearson",
            Builtin::GrowthRate => "growth_rate",
            Builtin::SesForecast => "ses_forecast",
            Builtin::SesBestAlpha => "ses_best_alpha",
            Builtin::Union => "union",
            Builtin::Intersection => "intersection",
            Builtin::Difference => "difference",
            Builtin::Member => "member",
            Builtin::Date => "date",
            Builtin::DateDiff => "date_diff",
            Builtin::Round => "round",
            Builtin::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.iter().copied().find(|b| b.name() == name)
    }

    /// Accepted argument counts, inclusive. `None` means unbounded.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            Builtin::Sum
            | Builtin::Mean
            | Builtin::Median
            | Builtin::Min
            | Builtin::Max
            | Builtin::VarP
            | Builtin::VarS
            | Builtin::StdP
            | Builtin::StdS => (1, None),
            Builtin::Count => (1, Some(2)),
            Builtin::Sort => (1, Some(2)),
            Builtin::TopK => (2, Some(2)),
            Builtin::Pearson => (2, Some(2)),
            Builtin::GrowthRate => (2, Some(3)),
            Builtin::SesForecast => (2, Some(2)),
            Builtin::SesBestAlpha => (1, Some(4)),
            Builtin::Union | Builtin::Intersection | Builtin::Difference => (2, Some(2)),
            Builtin::Member => (2, Some(2)),
            Builtin::Date => (1, Some(1)),
            Builtin::DateDiff => (2, Some(3)),
            Builtin::Round => (1, Some(2)),
            Builtin::Abs => (1, Some(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(Decimal),
    Str(String),
    Bool(bool),
    Var(String),
    List(Vec<Expr>),
    Set(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

/// Printing fully parenthesizes operators so that the output parses back to
/// the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(d) => write!(f, "{d}"),
            Expr::Str(s) => write_str_literal(f, s),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => f.write_str(v),
            Expr::List(xs) => {
                f.write_str("[")?;
                write_args(f, xs)?;
                f.write_str("]")
            }
            Expr::Set(xs) => {
                f.write_str("{")?;
                write_args(f, xs)?;
                f.write_str("}")
            }
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                write_args(f, args)?;
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Decimal),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
}

fn syntax(pos: usize, message: impl Into<String>) -> AggregationError {
    AggregationError::Syntax {
        pos,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, AggregationError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            let d = Decimal::from_str(&lit)
                .map_err(|_| syntax(start, format!("invalid number '{lit}'")))?;
            out.push((start, Tok::Num(d)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(start, "unterminated string")),
                    Some(&q) if q == quote => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).ok_or_else(|| syntax(i, "dangling escape"))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => *other,
                        });
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push((start, Tok::Str(s)));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let op2 = match two.as_str() {
            "==" => Some("=="),
            "!=" => Some("!="),
            "<=" => Some("<="),
            ">=" => Some(">="),
            _ => None,
        };
        if let Some(op) = op2 {
            out.push((start, Tok::Op(op)));
            i += 2;
            continue;
        }
        let tok = match c {
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '^' => Tok::Op("^"),
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            other => return Err(syntax(start, format!("unexpected character '{other}'"))),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), AggregationError> {
        let at = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(syntax(at, format!("expected {what}"))),
        }
    }

    fn comparison(&mut self) -> Result<Expr, AggregationError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Op("==")) => BinaryOp::Eq,
            Some(Tok::Op("!=")) => BinaryOp::Ne,
            Some(Tok::Op("<")) => BinaryOp::Lt,
            Some(Tok::Op("<=")) => BinaryOp::Le,
            Some(Tok::Op(">")) => BinaryOp::Gt,
            Some(Tok::Op(">=")) => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, AggregationError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("+")) => BinaryOp::Add,
                Some(Tok::Op("-")) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, AggregationError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("*")) => BinaryOp::Mul,
                Some(Tok::Op("/")) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, AggregationError> {
        if let Some(Tok::Op("-")) = self.peek() {
            self.bump();
            let e = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(e)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, AggregationError> {
        let base = self.primary()?;
        if let Some(Tok::Op("^")) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn seq(&mut self, close: Tok, what: &str) -> Result<Vec<Expr>, AggregationError> {
        let mut items = Vec::new();
        if self.peek() == Some(&close) {
            self.bump();
            return Ok(items);
        }
        loop {
            items.push(self.comparison()?);
            let at = self.here();
            match self.bump() {
                Some(Tok::Comma) => continue,
                Some(t) if t == close => return Ok(items),
                _ => return Err(syntax(at, format!("expected ',' or {what}"))),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, AggregationError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(d)) => Ok(Expr::Number(d)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::LParen) => {
                let e = self.comparison()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::LBracket) => Ok(Expr::List(self.seq(Tok::RBracket, "']'")?)),
            Some(Tok::LBrace) => Ok(Expr::Set(self.seq(Tok::RBrace, "'}'")?)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.bump();
                    let builtin = Builtin::from_name(&name).ok_or(AggregationError::UnknownFunction {
                        name: name.clone(),
                        pos: at,
                    })?;
                    let args = self.seq(Tok::RParen, "')'")?;
                    let (lo, hi) = builtin.arity();
                    if args.len() < lo || hi.is_some_and(|h| args.len() > h) {
                        return Err(syntax(
                            at,
                            format!("{name} does not accept {} argument(s)", args.len()),
                        ));
                    }
                    return Ok(Expr::Call(builtin, args));
                }
                match name.as_str() {
                    "true" => Ok(Expr::Bool(true)),
                    "false" => Ok(Expr::Bool(false)),
                    _ => Ok(Expr::Var(name)),
                }
            }
            Some(_) => Err(syntax(at, "unexpected token")),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }
}

/// Parses an expression in the aggregation language.
pub fn parse_expr(text: &str) -> Result<Expr, AggregationError> {
    let toks = tokenize(text)?;
    let end = text.chars().count();
    let mut p = Parser { toks, pos: 0, end };
    let e = p.comparison()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.here(), "trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(n: i64) -> Expr {
        Expr::Number(Decimal::from(n))
    }

    #[test]
    fn parses_call_with_list() {
        let e = parse_expr("mean([1,2,3])").unwrap();
        assert_eq!(
            e,
            Expr::Call(Builtin::Mean, vec![Expr::List(vec![num(1), num(2), num(3)])])
        );
    }

    #[test]
    fn parses_topk() {
        let e = parse_expr("topk([5,1,9], 2)").unwrap();
        assert!(matches!(e, Expr::Call(Builtin::TopK, ref args) if args.len() == 2));
    }

    #[test]
    fn rejects_unknown_function() {
        let err = parse_expr("frobnicate(1)").unwrap_err();
        assert!(matches!(err, AggregationError::UnknownFunction { ref name, pos: 0 } if name == "frobnicate"));
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_expr("1 + * 2").unwrap_err() {
            AggregationError::Syntax { pos, .. } => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("(1 + 2").is_err());
        assert!(parse_expr("\"open").is_err());
        assert!(parse_expr("mean()").is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse_expr("1 + 2 * 3").unwrap().to_string(), "(1 + (2 * 3))");
        assert_eq!(parse_expr("2 ^ 3 ^ 2").unwrap().to_string(), "(2 ^ (3 ^ 2))");
        assert_eq!(parse_expr("-2 ^ 2").unwrap().to_string(), "(-(2 ^ 2))");
        assert_eq!(parse_expr("8 - 3 - 1").unwrap().to_string(), "((8 - 3) - 1)");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..100_000, 0u32..4).prop_map(|(m, s)| Expr::Number(Decimal::new(m as i64, s))),
            "[a-z ]{0,6}".prop_map(Expr::Str),
            any::<bool>().prop_map(Expr::Bool),
            "[a-z][a-z0-9_]{0,4}"
                .prop_filter("keywords", |s| s != "true" && s != "false")
                .prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 32, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Expr::List),
                prop::collection::vec(inner.clone(), 0..4).prop_map(Expr::Set),
                inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Neg, Box::new(e))),
                (inner.clone(), inner.clone(), 0usize..11).prop_map(|(a, b, k)| {
                    let ops = [
                        BinaryOp::Add,
                        BinaryOp::Sub,
                        BinaryOp::Mul,
                        BinaryOp::Div,
                        BinaryOp::Pow,
                        BinaryOp::Eq,
                        BinaryOp::Ne,
                        BinaryOp::Lt,
                        BinaryOp::Le,
                        BinaryOp::Gt,
                        BinaryOp::Ge,
                    ];
                    Expr::Binary(ops[k], Box::new(a), Box::new(b))
                }),
                prop::collection::vec(inner, 1..3).prop_map(|args| Expr::Call(Builtin::Sum, args)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_fixpoint(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(reparsed.to_string(), printed);
        }
    }
}
