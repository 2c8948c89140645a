//! Renders syntax trees back to source text.
//!
//! Printing is canonical (4-space indentation, one statement per line,
//! minimal parentheses), so `parse(print(ast))` has the same structure as
//! `ast`. Alongside the text the printer reports, for every output line, the
//! source line of the node it was printed from; the mutator uses this to
//! align variant nodes with the original program.

use super::ast::*;
use super::value::{format_float, Value};

#[derive(Clone, Debug, Default)]
pub struct Printed {
    pub text: String,
    /// `origins[i]` is the original line behind output line `i + 1`
    /// (0 when the line has no counterpart, e.g. `else:` or blank lines).
    pub origins: Vec<u32>,
}

impl Printed {
    fn line(&mut self, indent: usize, content: &str, origin: u32) {
        for _ in 0..indent {
            self.text.push_str("    ");
        }
        self.text.push_str(content);
        self.text.push('\n');
        self.origins.push(origin);
    }
}

pub fn print_unit(unit: &AstUnit) -> Printed {
    print_functions(&unit.functions)
}

pub fn print_functions(functions: &[FunctionDef]) -> Printed {
    let mut out = Printed::default();
    for (i, f) in functions.iter().enumerate() {
        if i > 0 {
            out.line(0, "", 0);
        }
        out.line(0, &format!("def {}({}):", f.name, f.params.join(", ")), f.span.start);
        print_block(&f.body, 1, &mut out);
    }
    out
}

fn print_block(stmts: &[Stmt], indent: usize, out: &mut Printed) {
    for s in stmts {
        print_stmt(s, indent, out);
    }
}

fn print_stmt(s: &Stmt, indent: usize, out: &mut Printed) {
    let origin = s.step_span().start;
    match &s.kind {
        StmtKind::If { cond, body, orelse } => {
            out.line(indent, &format!("if {}:", expr_to_string(cond)), origin);
            print_block(body, indent + 1, out);
            let mut rest = orelse;
            loop {
                match rest {
                    Else::None => break,
                    Else::Block(b) => {
                        out.line(indent, "else:", 0);
                        print_block(b, indent + 1, out);
                        break;
                    }
                    Else::Elif(inner) => {
                        let StmtKind::If { cond, body, orelse } = &inner.kind else {
                            unreachable!("elif always wraps an if")
                        };
                        out.line(indent, &format!("elif {}:", expr_to_string(cond)), inner.step_span().start);
                        print_block(body, indent + 1, out);
                        rest = orelse;
                    }
                }
            }
        }
        StmtKind::While { cond, body } => {
            out.line(indent, &format!("while {}:", expr_to_string(cond)), origin);
            print_block(body, indent + 1, out);
        }
        StmtKind::For { var, iter, body, .. } => {
            out.line(indent, &format!("for {} in {}:", var, expr_to_string(iter)), origin);
            print_block(body, indent + 1, out);
        }
        _ => out.line(indent, &simple_stmt_to_string(s), origin),
    }
}

pub fn target_to_string(t: &Target) -> String {
    let mut s = t.name.clone();
    for i in &t.indices {
        s.push('[');
        s.push_str(&expr_to_string(i));
        s.push(']');
    }
    s
}

pub fn simple_stmt_to_string(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::Assign { target, value } => format!("{} = {}", target_to_string(target), expr_to_string(value)),
        StmtKind::AugAssign { target, op, value } => {
            format!("{} {}= {}", target_to_string(target), op.symbol(), expr_to_string(value))
        }
        StmtKind::Break => "break".into(),
        StmtKind::Continue => "continue".into(),
        StmtKind::Pass => "pass".into(),
        StmtKind::Return(None) => "return".into(),
        StmtKind::Return(Some(e)) => format!("return {}", expr_to_string(e)),
        StmtKind::Expr(e) => expr_to_string(e),
        StmtKind::If { cond, .. } => format!("if {}:", expr_to_string(cond)),
        StmtKind::While { cond, .. } => format!("while {}:", expr_to_string(cond)),
        StmtKind::For { var, iter, .. } => format!("for {} in {}:", var, expr_to_string(iter)),
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, 0, &mut s);
    s
}

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Bool(BoolOp::Or, ..) => 1,
        ExprKind::Bool(BoolOp::And, ..) => 2,
        ExprKind::Unary(UnaryOp::Not, _) => 3,
        ExprKind::Compare(..) => 4,
        ExprKind::Binary(BinOp::Add | BinOp::Sub, ..) => 5,
        ExprKind::Binary(BinOp::Mul | BinOp::Div | BinOp::FloorDiv | BinOp::Mod, ..) => 6,
        ExprKind::Unary(UnaryOp::Neg, _) => 7,
        ExprKind::Binary(BinOp::Pow, ..) => 8,
        ExprKind::Const(Value::Int(i)) if *i < 0 => 7,
        ExprKind::Const(Value::Float(f)) if f.is_sign_negative() && !f.is_nan() => 7,
        _ => 9,
    }
}

fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    let prec = precedence(e);
    let paren = prec < min_prec;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Const(v) => write_const(v, out),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(item, 1, out);
            }
            out.push(']');
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            out.push_str("not ");
            write_expr(inner, 5, out);
        }
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            write_expr(inner, 7, out);
        }
        ExprKind::Bool(op, a, b) => {
            let (p, word) = match op {
                BoolOp::Or => (1, " or "),
                BoolOp::And => (2, " and "),
            };
            write_expr(a, p, out);
            out.push_str(word);
            write_expr(b, p + 1, out);
        }
        ExprKind::Compare(op, a, b) => {
            write_expr(a, 5, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(b, 5, out);
        }
        ExprKind::Binary(BinOp::Pow, a, b) => {
            write_expr(a, 9, out);
            out.push_str(" ** ");
            write_expr(b, 7, out);
        }
        ExprKind::Binary(op, a, b) => {
            let p = precedence(e);
            write_expr(a, p, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(b, p + 1, out);
        }
        ExprKind::Index(base, idx) => {
            write_expr(base, 9, out);
            out.push('[');
            write_expr(idx, 0, out);
            out.push(']');
        }
        ExprKind::Slice { value, lower, upper, step } => {
            write_expr(value, 9, out);
            out.push('[');
            if let Some(l) = lower {
                write_expr(l, 0, out);
            }
            out.push(':');
            if let Some(u) = upper {
                write_expr(u, 0, out);
            }
            if let Some(s) = step {
                out.push(':');
                write_expr(s, 0, out);
            }
            out.push(']');
        }
        ExprKind::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, 1, out);
            }
            out.push(')');
        }
        ExprKind::Method(recv, name, args) => {
            write_expr(recv, 9, out);
            out.push('.');
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, 1, out);
            }
            out.push(')');
        }
        ExprKind::ListComp { element, var, iter, cond } => {
            out.push('[');
            write_expr(element, 1, out);
            out.push_str(" for ");
            out.push_str(var);
            out.push_str(" in ");
            write_expr(iter, 1, out);
            if let Some(c) = cond {
                out.push_str(" if ");
                write_expr(c, 1, out);
            }
            out.push(']');
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_const(v: &Value, out: &mut String) {
    match v {
        Value::Float(f) if !f.is_finite() => out.push_str(&format!("float('{}')", format_float(*f))),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_const(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.render()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, parse_expr};

    fn strip_spans(unit: &AstUnit) -> String {
        print_unit(unit).text
    }

    #[test]
    fn reprint_is_a_fixed_point() {
        let src = "def f(xs, k):\n    total = 0\n    for x in xs:\n        if x > k and not (x % 2 == 0):\n            total += x ** 2\n        elif x < -k:\n            total -= (x - 1) * 2\n        else:\n            continue\n    ys = [y * 2 for y in xs if y != 0]\n    ys.append(-total)\n    return ys[1:-1]\n";
        let once = print_unit(&parse(src).unwrap()).text;
        let twice = strip_spans(&parse(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn parentheses_only_where_needed() {
        for (src, expected) in [
            ("(a + b) * c", "(a + b) * c"),
            ("a + (b * c)", "a + b * c"),
            ("a - (b - c)", "a - (b - c)"),
            ("not (a <= b)", "not (a <= b)"),
            ("not not x", "not (not x)"),
            ("-(2 ** 2)", "-2 ** 2"),
            ("(-2) ** 2", "(-2) ** 2"),
            ("(a or b) and c", "(a or b) and c"),
        ] {
            assert_eq!(expr_to_string(&parse_expr(src).unwrap()), expected, "{src}");
        }
    }

    #[test]
    fn origins_track_source_lines() {
        let src = "def f(x):\n\n    y = [1,\n         2]\n    if x:\n        y = 3\n    else:\n        y = 4\n    return y\n";
        let printed = print_unit(&parse(src).unwrap());
        assert_eq!(printed.origins, vec![1, 3, 5, 6, 0, 8, 9]);
    }
}
