//! Recursive-descent parser producing an [`AstUnit`].
//!
//! Only the supported subset is accepted. Anything else (imports, classes,
//! exceptions, nested definitions, I/O, one-line suites) is rejected with a
//! positioned [`SyntaxError`] rather than partially parsed.

use super::ast::*;
use super::builtins::is_builtin;
use super::lexer::{tokenize, Tok, Token};
use super::value::Value;
use super::SyntaxError;

pub fn parse(text: &str) -> Result<AstUnit, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { toks: tokens, pos: 0 };
    let functions = parser.module()?;
    let unit = AstUnit { functions, source: text.to_string() };
    check_unit(&unit)?;
    Ok(unit)
}

const RESERVED: &[&str] = &[
    "def", "return", "if", "elif", "else", "while", "for", "in", "break", "continue", "pass", "and", "or",
    "not", "True", "False", "None", "import", "from", "class", "try", "except", "finally", "raise", "with",
    "as", "lambda", "global", "nonlocal", "yield", "assert", "del", "is", "async", "await",
];

fn unsupported_keyword(word: &str) -> Option<&'static str> {
    Some(match word {
        "import" | "from" => "imports are not supported",
        "class" => "class definitions are not supported",
        "try" | "except" | "finally" | "raise" | "assert" => "exceptions are not supported",
        "with" => "context managers are not supported",
        "lambda" => "lambda expressions are not supported",
        "global" | "nonlocal" => "global/nonlocal declarations are not supported",
        "yield" => "generators are not supported",
        "del" => "del statements are not supported",
        "async" | "await" => "async code is not supported",
        "is" => "identity comparisons are not supported",
        _ => return None,
    })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_n(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    /// Line of the most recently consumed token.
    fn prev_line(&self) -> u32 {
        self.toks[self.pos.saturating_sub(1)].line
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> SyntaxError {
        let t = &self.toks[self.pos];
        SyntaxError { line: t.line, col: t.col, message: msg.into() }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err_here(format!("expected '{op}', found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err_here(format!("expected '{kw}', found {}", describe(self.peek()))))
        }
    }

    fn expect_newline(&mut self) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Op(";") => Err(self.err_here("multiple statements on one line are not supported")),
            other => Err(self.err_here(format!("expected end of line, found {}", describe(other)))),
        }
    }

    fn identifier(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Name(n) => {
                if let Some(msg) = unsupported_keyword(&n) {
                    return Err(self.err_here(msg));
                }
                if RESERVED.contains(&n.as_str()) {
                    return Err(self.err_here(format!("expected identifier, found keyword '{n}'")));
                }
                self.advance();
                Ok(n)
            }
            other => Err(self.err_here(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn module(&mut self) -> Result<Vec<FunctionDef>, SyntaxError> {
        let mut functions: Vec<FunctionDef> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.advance();
                }
                Tok::Name(n) if n == "def" => {
                    let start = self.line();
                    let f = self.function_def()?;
                    if functions.iter().any(|g| g.name == f.name) {
                        return Err(SyntaxError { line: start, col: 1, message: format!("function '{}' defined twice", f.name) });
                    }
                    functions.push(f);
                }
                Tok::Name(n) if unsupported_keyword(&n).is_some() => {
                    return Err(self.err_here(unsupported_keyword(&n).unwrap()));
                }
                Tok::Str(_) if matches!(self.peek_n(1), Tok::Newline) => {
                    // module docstring
                    self.advance();
                    self.advance();
                }
                Tok::Indent => return Err(self.err_here("unexpected indent")),
                _ => return Err(self.err_here("only function definitions are allowed at top level")),
            }
        }
        if functions.is_empty() {
            return Err(self.err_here("program defines no functions"));
        }
        Ok(functions)
    }

    fn function_def(&mut self) -> Result<FunctionDef, SyntaxError> {
        let start = self.line();
        self.expect_kw("def")?;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") {
                return Err(self.err_here("variadic parameters are not supported"));
            }
            let p = self.identifier()?;
            if params.contains(&p) {
                return Err(self.err_here(format!("duplicate parameter '{p}'")));
            }
            if self.eat_op(":") {
                self.expression()?;
            }
            if self.is_op("=") {
                return Err(self.err_here("default parameter values are not supported"));
            }
            params.push(p);
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.expression()?;
        }
        self.expect_op(":")?;
        let body = self.block()?;
        let end = body.last().map(|s| s.span.end).unwrap_or(start);
        Ok(FunctionDef { name, params, body, span: Span::new(start, end) })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        if !matches!(self.peek(), Tok::Newline) {
            return Err(self.err_here("a block must start on a new indented line"));
        }
        self.advance();
        if !matches!(self.peek(), Tok::Indent) {
            return Err(self.err_here("expected an indented block"));
        }
        self.advance();
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Tok::Dedent => {
                    self.advance();
                    break;
                }
                Tok::Eof => break,
                Tok::Newline => {
                    self.advance();
                }
                _ => stmts.push(self.statement()?),
            }
        }
        if stmts.is_empty() {
            return Err(self.err_here("empty block"));
        }
        Ok(stmts)
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        let start = self.line();
        let word = match self.peek() {
            Tok::Name(n) => Some(n.clone()),
            Tok::Indent => return Err(self.err_here("unexpected indent")),
            _ => None,
        };
        if let Some(word) = word.as_deref() {
            if let Some(msg) = unsupported_keyword(word) {
                return Err(self.err_here(msg));
            }
            match word {
                "def" => return Err(self.err_here("nested function definitions are not supported")),
                "if" => {
                    self.advance();
                    return self.if_rest(start);
                }
                "while" => {
                    self.advance();
                    let cond = self.expression()?;
                    self.expect_op(":")?;
                    let body = self.block()?;
                    self.reject_loop_else()?;
                    let end = body.last().map(|s| s.span.end).unwrap_or(start);
                    return Ok(Stmt { kind: StmtKind::While { cond, body }, span: Span::new(start, end) });
                }
                "for" => {
                    self.advance();
                    let var = self.identifier()?;
                    if self.is_op(",") {
                        return Err(self.err_here("tuple unpacking is not supported"));
                    }
                    self.expect_kw("in")?;
                    let iter = self.expression()?;
                    self.expect_op(":")?;
                    let header = Span::new(start, self.prev_line());
                    let body = self.block()?;
                    self.reject_loop_else()?;
                    let end = body.last().map(|s| s.span.end).unwrap_or(start);
                    return Ok(Stmt { kind: StmtKind::For { var, iter, body, header }, span: Span::new(start, end) });
                }
                "else" | "elif" => return Err(self.err_here(format!("'{word}' without matching 'if'"))),
                _ => {}
            }
        }
        let kind = self.simple_statement()?;
        let end = self.prev_line();
        self.expect_newline()?;
        Ok(Stmt { kind, span: Span::new(start, end) })
    }

    fn reject_loop_else(&self) -> Result<(), SyntaxError> {
        if self.is_kw("else") {
            return Err(self.err_here("loop 'else' clauses are not supported"));
        }
        Ok(())
    }

    fn if_rest(&mut self, start: u32) -> Result<Stmt, SyntaxError> {
        let cond = self.expression()?;
        self.expect_op(":")?;
        let body = self.block()?;
        let mut end = body.last().map(|s| s.span.end).unwrap_or(start);
        let orelse = if self.is_kw("elif") {
            let elif_start = self.line();
            self.advance();
            let nested = self.if_rest(elif_start)?;
            end = nested.span.end;
            Else::Elif(Box::new(nested))
        } else if self.is_kw("else") {
            self.advance();
            self.expect_op(":")?;
            let block = self.block()?;
            end = block.last().map(|s| s.span.end).unwrap_or(end);
            Else::Block(block)
        } else {
            Else::None
        };
        Ok(Stmt { kind: StmtKind::If { cond, body, orelse }, span: Span::new(start, end) })
    }

    fn simple_statement(&mut self) -> Result<StmtKind, SyntaxError> {
        if self.eat_kw("pass") {
            return Ok(StmtKind::Pass);
        }
        if self.eat_kw("break") {
            return Ok(StmtKind::Break);
        }
        if self.eat_kw("continue") {
            return Ok(StmtKind::Continue);
        }
        if self.eat_kw("return") {
            if matches!(self.peek(), Tok::Newline) {
                return Ok(StmtKind::Return(None));
            }
            let e = self.expression()?;
            if self.is_op(",") {
                return Err(self.err_here("tuples are not supported"));
            }
            return Ok(StmtKind::Return(Some(e)));
        }
        let expr = self.expression()?;
        if self.is_op(",") {
            return Err(self.err_here("tuple unpacking is not supported"));
        }
        if self.is_op(":") {
            return Err(self.err_here("annotated assignments are not supported"));
        }
        let aug = match self.peek() {
            Tok::Op("+=") => Some(Ok(BinOp::Add)),
            Tok::Op("-=") => Some(Ok(BinOp::Sub)),
            Tok::Op("*=") => Some(Ok(BinOp::Mul)),
            Tok::Op("//=") => Some(Ok(BinOp::FloorDiv)),
            Tok::Op(op @ ("/=" | "%=" | "**=")) => Some(Err(format!("augmented assignment '{op}' is not supported"))),
            _ => None,
        };
        if let Some(aug) = aug {
            let op = aug.map_err(|m| self.err_here(m))?;
            let target = self.to_target(&expr)?;
            self.advance();
            let value = self.expression()?;
            return Ok(StmtKind::AugAssign { target, op, value });
        }
        if self.is_op("=") {
            let target = self.to_target(&expr)?;
            self.advance();
            let value = self.expression()?;
            if self.is_op("=") {
                return Err(self.err_here("chained assignment is not supported"));
            }
            return Ok(StmtKind::Assign { target, value });
        }
        Ok(StmtKind::Expr(expr))
    }

    fn to_target(&self, expr: &Expr) -> Result<Target, SyntaxError> {
        fn collect(expr: &Expr, indices: &mut Vec<Expr>) -> Option<String> {
            match &expr.kind {
                ExprKind::Name(n) => Some(n.clone()),
                ExprKind::Index(base, idx) => {
                    let name = collect(base, indices)?;
                    indices.push((**idx).clone());
                    Some(name)
                }
                _ => None,
            }
        }
        let mut indices = Vec::new();
        match collect(expr, &mut indices) {
            Some(name) => Ok(Target { name, indices }),
            None => Err(self.err_here("invalid assignment target")),
        }
    }

    pub fn expression(&mut self) -> Result<Expr, SyntaxError> {
        let e = self.or_test()?;
        if self.is_kw("if") {
            return Err(self.err_here("conditional expressions are not supported"));
        }
        Ok(e)
    }

    fn or_test(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.and_test()?;
        while self.eat_kw("or") {
            let right = self.and_test()?;
            let span = left.span.join(right.span);
            left = Expr::new(ExprKind::Bool(BoolOp::Or, Box::new(left), Box::new(right)), span);
        }
        Ok(left)
    }

    fn and_test(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.not_test()?;
        while self.eat_kw("and") {
            let right = self.not_test()?;
            let span = left.span.join(right.span);
            left = Expr::new(ExprKind::Bool(BoolOp::And, Box::new(left), Box::new(right)), span);
        }
        Ok(left)
    }

    fn not_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_kw("not") {
            let inner = self.not_test()?;
            let span = Span::line(line).join(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(inner)), span));
        }
        self.comparison()
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        match self.peek() {
            Tok::Op("==") => Some(CmpOp::Eq),
            Tok::Op("!=") => Some(CmpOp::Ne),
            Tok::Op("<") => Some(CmpOp::Lt),
            Tok::Op("<=") => Some(CmpOp::Le),
            Tok::Op(">") => Some(CmpOp::Gt),
            Tok::Op(">=") => Some(CmpOp::Ge),
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let left = self.arith()?;
        if self.is_kw("in") || (self.is_kw("not") && matches!(self.peek_n(1), Tok::Name(n) if n == "in")) {
            return Err(self.err_here("membership tests are not supported"));
        }
        if self.is_kw("is") {
            return Err(self.err_here("identity comparisons are not supported"));
        }
        let Some(op) = self.cmp_op() else { return Ok(left) };
        self.advance();
        let right = self.arith()?;
        if self.cmp_op().is_some() {
            return Err(self.err_here("chained comparisons are not supported"));
        }
        let span = left.span.join(right.span);
        Ok(Expr::new(ExprKind::Compare(op, Box::new(left), Box::new(right)), span))
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.term()?;
            let span = left.span.join(right.span);
            left = Expr::new(ExprKind::Binary(op, Box::new(left), Box::new(right)), span);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                Tok::Op(o @ ("@" | "&" | "|" | "^" | "<<" | ">>")) => {
                    return Err(self.err_here(format!("operator '{o}' is not supported")))
                }
                _ => break,
            };
            self.advance();
            let right = self.factor()?;
            let span = left.span.join(right.span);
            left = Expr::new(ExprKind::Binary(op, Box::new(left), Box::new(right)), span);
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_op("-") {
            let inner = self.factor()?;
            let span = Span::line(line).join(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnaryOp::Neg, Box::new(inner)), span));
        }
        if self.is_op("+") || self.is_op("~") {
            return Err(self.err_here("unary operator is not supported"));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            let span = base.span.join(exp.span);
            return Ok(Expr::new(ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), span));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            if self.is_op("(") {
                let ExprKind::Name(name) = &e.kind else {
                    return Err(self.err_here("only named functions can be called"));
                };
                let name = name.clone();
                self.advance();
                let args = self.call_args()?;
                let span = e.span.join(Span::line(self.prev_line()));
                e = Expr::new(ExprKind::Call(name, args), span);
            } else if self.is_op("[") {
                self.advance();
                e = self.subscript(e)?;
            } else if self.is_op(".") {
                self.advance();
                let method = self.identifier()?;
                if !self.is_op("(") {
                    return Err(self.err_here("attribute access is not supported"));
                }
                if method != "append" {
                    return Err(self.err_here(format!("method '{method}' is not supported")));
                }
                self.advance();
                let args = self.call_args()?;
                let span = e.span.join(Span::line(self.prev_line()));
                e = Expr::new(ExprKind::Method(Box::new(e), method, args), span);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, SyntaxError> {
        let mut args = Vec::new();
        while !self.is_op(")") {
            if matches!(self.peek(), Tok::Name(_)) && matches!(self.peek_n(1), Tok::Op("=")) {
                return Err(self.err_here("keyword arguments are not supported"));
            }
            if self.is_op("*") || self.is_op("**") {
                return Err(self.err_here("argument unpacking is not supported"));
            }
            let arg = self.expression()?;
            if self.is_kw("for") {
                return Err(self.err_here("generator expressions are not supported"));
            }
            args.push(arg);
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(args)
    }

    fn subscript(&mut self, value: Expr) -> Result<Expr, SyntaxError> {
        let mut parts: [Option<Box<Expr>>; 3] = [None, None, None];
        let mut colons = 0;
        loop {
            if self.is_op("]") {
                break;
            }
            if self.eat_op(":") {
                colons += 1;
                if colons > 2 {
                    return Err(self.err_here("invalid slice"));
                }
                continue;
            }
            if parts[colons].is_some() {
                return Err(self.err_here("invalid subscript"));
            }
            if self.is_op(",") {
                return Err(self.err_here("tuple subscripts are not supported"));
            }
            parts[colons] = Some(Box::new(self.expression()?));
        }
        self.expect_op("]")?;
        let span = value.span.join(Span::line(self.prev_line()));
        if colons == 0 {
            let Some(index) = parts[0].take() else {
                return Err(self.err_here("empty subscript"));
            };
            return Ok(Expr::new(ExprKind::Index(Box::new(value), index), span));
        }
        let [lower, upper, step] = parts;
        Ok(Expr::new(ExprKind::Slice { value: Box::new(value), lower, upper, step }, span))
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let tok = self.peek().clone();
        match tok {
            Tok::Int(i) => {
                self.advance();
                Ok(Expr::new(ExprKind::Const(Value::Int(i)), Span::line(line)))
            }
            Tok::Float(f) => {
                self.advance();
                Ok(Expr::new(ExprKind::Const(Value::Float(f)), Span::line(line)))
            }
            Tok::Str(s) => {
                self.advance();
                let mut s = s;
                while let Tok::Str(more) = self.peek().clone() {
                    self.advance();
                    s.push_str(&more);
                }
                Ok(Expr::new(ExprKind::Const(Value::Str(s)), Span::new(line, self.prev_line())))
            }
            Tok::Name(n) => match n.as_str() {
                "True" => {
                    self.advance();
                    Ok(Expr::new(ExprKind::Const(Value::Bool(true)), Span::line(line)))
                }
                "False" => {
                    self.advance();
                    Ok(Expr::new(ExprKind::Const(Value::Bool(false)), Span::line(line)))
                }
                "None" => {
                    self.advance();
                    Ok(Expr::new(ExprKind::Const(Value::None), Span::line(line)))
                }
                _ => {
                    let name = self.identifier()?;
                    Ok(Expr::new(ExprKind::Name(name), Span::line(line)))
                }
            },
            Tok::Op("(") => {
                self.advance();
                if self.is_op(")") {
                    return Err(self.err_here("tuples are not supported"));
                }
                let inner = self.expression()?;
                if self.is_op(",") {
                    return Err(self.err_here("tuples are not supported"));
                }
                if self.is_kw("for") {
                    return Err(self.err_here("generator expressions are not supported"));
                }
                self.expect_op(")")?;
                Ok(Expr::new(inner.kind, Span::new(line, self.prev_line())))
            }
            Tok::Op("[") => {
                self.advance();
                self.list_display(line)
            }
            Tok::Op("{") => Err(self.err_here("dicts and sets are not supported")),
            other => Err(self.err_here(format!("unexpected {}", describe(&other)))),
        }
    }

    fn list_display(&mut self, line: u32) -> Result<Expr, SyntaxError> {
        if self.eat_op("]") {
            return Ok(Expr::new(ExprKind::List(vec![]), Span::new(line, self.prev_line())));
        }
        let first = self.expression()?;
        if self.eat_kw("for") {
            let var = self.identifier()?;
            if self.is_op(",") {
                return Err(self.err_here("tuple unpacking is not supported"));
            }
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let cond = if self.eat_kw("if") { Some(Box::new(self.or_test()?)) } else { None };
            if self.is_kw("for") || self.is_kw("if") {
                return Err(self.err_here("only a single 'for' with an optional 'if' is supported in comprehensions"));
            }
            self.expect_op("]")?;
            return Ok(Expr::new(
                ExprKind::ListComp { element: Box::new(first), var, iter: Box::new(iter), cond },
                Span::new(line, self.prev_line()),
            ));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.expression()?);
        }
        self.expect_op("]")?;
        Ok(Expr::new(ExprKind::List(items), Span::new(line, self.prev_line())))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Int(i) => format!("'{i}'"),
        Tok::Float(f) => format!("'{f}'"),
        Tok::Str(_) => "string literal".into(),
        Tok::Op(o) => format!("'{o}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Whole-unit checks that need every function name: call targets, placement
/// of mutating method calls, break/continue inside loops.
fn check_unit(unit: &AstUnit) -> Result<(), SyntaxError> {
    let err = |line: u32, message: String| SyntaxError { line, col: 1, message };
    for f in &unit.functions {
        let mut problem: Option<SyntaxError> = None;
        check_block(&f.body, 0, &mut |line, msg| {
            if problem.is_none() {
                problem = Some(err(line, msg));
            }
        });
        visit_stmts(&f.body, &mut |s| {
            let mut check_expr = |e: &Expr, top_level_method: bool| {
                e.walk(&mut |sub| match &sub.kind {
                    ExprKind::Call(name, _) => {
                        if matches!(name.as_str(), "print" | "input" | "open" | "exec" | "eval") {
                            problem.get_or_insert(err(sub.span.start, format!("I/O and dynamic evaluation ('{name}') are not supported")));
                        } else if !is_builtin(name) && !unit.has_function(name) {
                            problem.get_or_insert(err(sub.span.start, format!("call to unknown function '{name}'")));
                        }
                    }
                    ExprKind::Method(recv, _, args) => {
                        if !(top_level_method && std::ptr::eq(sub, e)) {
                            problem.get_or_insert(err(sub.span.start, "list.append is only supported as a statement".into()));
                        } else if place_root(recv).is_none() {
                            problem.get_or_insert(err(sub.span.start, "append target must be a variable".into()));
                        } else if args.len() != 1 {
                            problem.get_or_insert(err(sub.span.start, "append takes exactly one argument".into()));
                        }
                    }
                    _ => {}
                });
            };
            match &s.kind {
                StmtKind::Expr(e) => check_expr(e, true),
                StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
                    check_expr(value, false);
                    target.indices.iter().for_each(|i| check_expr(i, false));
                }
                StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => check_expr(cond, false),
                StmtKind::For { iter, .. } => check_expr(iter, false),
                StmtKind::Return(Some(e)) => check_expr(e, false),
                _ => {}
            }
        });
        if let Some(p) = problem {
            return Err(p);
        }
    }
    Ok(())
}

fn check_block(stmts: &[Stmt], loop_depth: u32, report: &mut dyn FnMut(u32, String)) {
    for s in stmts {
        match &s.kind {
            StmtKind::Break | StmtKind::Continue if loop_depth == 0 => {
                report(s.span.start, "'break'/'continue' outside loop".into())
            }
            StmtKind::If { body, orelse, .. } => {
                check_block(body, loop_depth, report);
                match orelse {
                    Else::None => {}
                    Else::Elif(e) => check_block(std::slice::from_ref(e.as_ref()), loop_depth, report),
                    Else::Block(b) => check_block(b, loop_depth, report),
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => check_block(body, loop_depth + 1, report),
            _ => {}
        }
    }
}

/// Parses a single expression (used for conditions in tests and tooling).
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { toks: tokens, pos: 0 };
    let e = parser.expression()?;
    match parser.peek() {
        Tok::Newline | Tok::Eof => Ok(e),
        other => Err(parser.err_here(format!("unexpected {} after expression", describe(other)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_function() {
        let unit = parse("def f(x):\n    return x + 1").unwrap();
        assert_eq!(unit.functions.len(), 1);
        assert_eq!(unit.functions[0].params, vec!["x".to_string()]);
    }

    #[test]
    fn malformed_header_reports_line_one() {
        let err = parse("def f(:").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn rejects_constructs_outside_the_subset() {
        let cases = [
            ("import os\ndef f():\n    return 1\n", "imports"),
            ("def f():\n    def g():\n        return 1\n    return g()\n", "nested"),
            ("def f():\n    try:\n        x = 1\n    except:\n        x = 2\n    return x\n", "exceptions"),
            ("def f():\n    print(1)\n", "I/O"),
            ("def f(x):\n    return 1 < x < 3\n", "chained"),
            ("def f(x):\n    if x: return 1\n    return 0\n", "new indented line"),
            ("def f(x):\n    return {1: 2}\n", "dicts"),
            ("def f(x):\n    y = x.append(1)\n    return y\n", "statement"),
            ("def f(x):\n    return g(x)\n", "unknown function"),
        ];
        for (src, needle) in cases {
            let err = parse(src).unwrap_err();
            assert!(err.message.contains(needle), "{src:?}: {err}");
        }
    }

    #[test]
    fn spans_nest() {
        let src = "def f(xs):\n    total = 0\n    for x in xs:\n        if x > 0:\n            total += x\n        else:\n            total -= 1\n    return total\n";
        let unit = parse(src).unwrap();
        let f = &unit.functions[0];
        assert_eq!(f.span, Span::new(1, 8));
        fn check(parent: Span, stmts: &[Stmt]) {
            for s in stmts {
                assert!(parent.contains(&s.span), "{:?} not in {:?}", s.span, parent);
                match &s.kind {
                    StmtKind::If { body, orelse, .. } => {
                        check(s.span, body);
                        if let Else::Block(b) = orelse {
                            check(s.span, b);
                        }
                    }
                    StmtKind::For { body, .. } | StmtKind::While { body, .. } => check(s.span, body),
                    _ => {}
                }
            }
        }
        check(f.span, &f.body);
    }

    #[test]
    fn elif_chains_nest() {
        let src = "def f(x):\n    if x > 0:\n        return 1\n    elif x < 0:\n        return -1\n    else:\n        return 0\n";
        let unit = parse(src).unwrap();
        let StmtKind::If { orelse: Else::Elif(inner), .. } = &unit.functions[0].body[0].kind else {
            panic!("expected elif")
        };
        assert_eq!(inner.span, Span::new(4, 7));
    }

    #[test]
    fn annotations_are_accepted_and_ignored() {
        let unit = parse("def f(xs: list, n: int) -> int:\n    return n\n").unwrap();
        assert_eq!(unit.functions[0].params, vec!["xs", "n"]);
    }
}
