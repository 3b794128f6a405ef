//! GraphQL SDL subset: lexer, recursive-descent parser, type-graph mapping
//! and heuristic rule-skeleton derivation.
//!
//! Supported: `type`, `input`, `enum`, `scalar`, field arguments with
//! defaults, list and non-null wrappers, descriptions and comments.
//! Directives, interfaces, unions, subscriptions, `schema` and `extend`
//! blocks are skipped with a warning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Attribute, EdgeType, GraphError, NodeType, TypeGraph};
use crate::rule::{CallSpec, ChangeTag, OperationKind, RuleEdgeSpec, RuleNodeSpec, RuleSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown type `{name}`")]
    UnresolvedType {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("{line}:{column}: type `{name}` is defined twice")]
    Duplicate {
        name: String,
        line: usize,
        column: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub const BUILTIN_SCALARS: [&str; 5] = ["Int", "Float", "String", "Boolean", "ID"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "of", rename_all = "snake_case")]
pub enum TypeRef {
    Named(String),
    List(Box<TypeRef>),
    NonNull(Box<TypeRef>),
}

impl TypeRef {
    /// The innermost named type.
    pub fn base(&self) -> &str {
        match self {
            TypeRef::Named(n) => n,
            TypeRef::List(t) | TypeRef::NonNull(t) => t.base(),
        }
    }

    pub fn is_list(&self) -> bool {
        match self {
            TypeRef::Named(_) => false,
            TypeRef::List(_) => true,
            TypeRef::NonNull(t) => t.is_list(),
        }
    }

    pub fn is_non_null(&self) -> bool {
        matches!(self, TypeRef::NonNull(_))
    }
}

impl std::fmt::Display for TypeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TypeRef::Named(n) => f.write_str(n),
            TypeRef::List(t) => write!(f, "[{t}]"),
            TypeRef::NonNull(t) => write!(f, "{t}!"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputValue {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<InputValue>,
    #[serde(rename = "type")]
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectType {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

impl ObjectType {
    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputType {
    pub name: String,
    pub fields: Vec<InputValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumType {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemaModel {
    pub objects: Vec<ObjectType>,
    pub inputs: Vec<InputType>,
    pub enums: Vec<EnumType>,
    pub scalars: Vec<String>,
    /// Names of skipped interface/union definitions; references to them are
    /// tolerated and dropped when mapping to a type graph.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

const ROOT_TYPES: [&str; 3] = ["Query", "Mutation", "Subscription"];

impl SchemaModel {
    pub fn object(&self, name: &str) -> Option<&ObjectType> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn query(&self) -> Option<&ObjectType> {
        self.object("Query")
    }

    pub fn mutation(&self) -> Option<&ObjectType> {
        self.object("Mutation")
    }

    fn is_leaf(&self, name: &str) -> bool {
        BUILTIN_SCALARS.contains(&name)
            || self.scalars.iter().any(|s| s == name)
            || self.enums.iter().any(|e| e.name == name)
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Punct(char),
    Spread,
    Str(String),
    Num(String),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, SchemaError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() || c == ',' || c == '\u{feff}' {
            advance(&mut i, &mut line, &mut col, c);
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
        } else if c == '"' {
            let block = chars.get(i + 1) == Some(&'"') && chars.get(i + 2) == Some(&'"');
            let mut s = String::new();
            if block {
                for _ in 0..3 {
                    advance(&mut i, &mut line, &mut col, '"');
                }
                loop {
                    if i >= chars.len() {
                        return Err(syntax(tl, tc, "unterminated block string"));
                    }
                    if chars[i] == '"'
                        && chars.get(i + 1) == Some(&'"')
                        && chars.get(i + 2) == Some(&'"')
                    {
                        for _ in 0..3 {
                            advance(&mut i, &mut line, &mut col, '"');
                        }
                        break;
                    }
                    s.push(chars[i]);
                    {
                        let ch = chars[i];
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            } else {
                advance(&mut i, &mut line, &mut col, c);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(syntax(tl, tc, "unterminated string")),
                        Some('"') => {
                            advance(&mut i, &mut line, &mut col, '"');
                            break;
                        }
                        Some('\\') => {
                            advance(&mut i, &mut line, &mut col, '\\');
                            if let Some(&e) = chars.get(i) {
                                s.push(match e {
                                    'n' => '\n',
                                    't' => '\t',
                                    other => other,
                                });
                                advance(&mut i, &mut line, &mut col, e);
                            }
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(&mut i, &mut line, &mut col, ch);
                        }
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                column: tc,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Name(s),
                line: tl,
                column: tc,
            });
        } else if c.is_ascii_digit() || c == '-' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || "-+.".contains(chars[i]))
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Num(s),
                line: tl,
                column: tc,
            });
        } else if c == '.' {
            if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') {
                for _ in 0..3 {
                    advance(&mut i, &mut line, &mut col, '.');
                }
                out.push(Token {
                    tok: Tok::Spread,
                    line: tl,
                    column: tc,
                });
            } else {
                return Err(syntax(tl, tc, "unexpected `.`"));
            }
        } else if "{}()[]:!=@|&$".contains(c) {
            advance(&mut i, &mut line, &mut col, c);
            out.push(Token {
                tok: Tok::Punct(c),
                line: tl,
                column: tc,
            });
        } else {
            return Err(syntax(tl, tc, &format!("unexpected character `{c}`")));
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

fn syntax(line: usize, column: usize, message: &str) -> SchemaError {
    SchemaError::Syntax {
        line,
        column,
        message: message.to_string(),
    }
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    model: SchemaModel,
    /// Every named-type reference with its position, checked at the end.
    refs: Vec<(String, usize, usize)>,
    defined: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: &str) -> SchemaError {
        let t = self.peek();
        syntax(t.line, t.column, msg)
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), SchemaError> {
        if self.is_punct(c) {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(&format!(
                "expected `{c}`, found {}",
                describe(&self.peek().tok)
            )))
        }
    }

    fn name(&mut self) -> Result<String, SchemaError> {
        match self.peek().tok.clone() {
            Tok::Name(n) => {
                self.next();
                Ok(n)
            }
            other => Err(self.err_here(&format!("expected a name, found {}", describe(&other)))),
        }
    }

    fn warn(&mut self, line: usize, column: usize, message: String) {
        self.model.warnings.push(Warning {
            line,
            column,
            message,
        });
    }

    fn skip_description(&mut self) {
        if matches!(self.peek().tok, Tok::Str(_)) {
            self.next();
        }
    }

    fn document(mut self) -> Result<SchemaModel, SchemaError> {
        loop {
            self.skip_description();
            let t = self.peek().clone();
            let kw = match &t.tok {
                Tok::Eof => break,
                Tok::Name(n) => n.clone(),
                other => {
                    return Err(
                        self.err_here(&format!("expected a definition, found {}", describe(other)))
                    )
                }
            };
            match kw.as_str() {
                "type" => self.object_type()?,
                "input" => self.input_type()?,
                "enum" => self.enum_type()?,
                "scalar" => {
                    self.next();
                    let name = self.name()?;
                    self.define(&name, t.line, t.column)?;
                    self.directives()?;
                    self.model.scalars.push(name);
                }
                "interface" | "union" => self.skip_abstract(&kw)?,
                "schema" => {
                    self.next();
                    self.warn(t.line, t.column, "schema definition ignored".into());
                    self.directives()?;
                    self.skip_block()?;
                }
                "extend" => {
                    self.next();
                    self.warn(t.line, t.column, "type extension ignored".into());
                    self.skip_definition()?;
                }
                "directive" => {
                    self.next();
                    self.warn(t.line, t.column, "directive definition ignored".into());
                    self.skip_directive_definition()?;
                }
                other => {
                    return Err(self.err_here(&format!("unknown definition keyword `{other}`")))
                }
            }
        }
        self.resolve()?;
        Ok(self.model)
    }

    fn define(&mut self, name: &str, line: usize, column: usize) -> Result<(), SchemaError> {
        if !self.defined.insert(name.to_string()) {
            return Err(SchemaError::Duplicate {
                name: name.to_string(),
                line,
                column,
            });
        }
        Ok(())
    }

    fn resolve(&mut self) -> Result<(), SchemaError> {
        for (name, line, column) in &self.refs {
            let known = BUILTIN_SCALARS.contains(&name.as_str()) || self.defined.contains(name);
            if !known {
                return Err(SchemaError::UnresolvedType {
                    name: name.clone(),
                    line: *line,
                    column: *column,
                });
            }
        }
        Ok(())
    }

    fn object_type(&mut self) -> Result<(), SchemaError> {
        let kw = self.next();
        let name = self.name()?;
        if self.peek().tok == Tok::Name("implements".into()) {
            let t = self.next();
            self.warn(t.line, t.column, format!("interfaces of `{name}` ignored"));
            if self.is_punct('&') {
                self.next();
            }
            self.name()?;
            while self.is_punct('&') {
                self.next();
                self.name()?;
            }
        }
        self.directives()?;
        if name == "Subscription" {
            self.define(&name, kw.line, kw.column)?;
            self.model.skipped.push(name.clone());
            self.warn(
                kw.line,
                kw.column,
                "subscriptions are not supported; `Subscription` skipped".into(),
            );
            return self.skip_block();
        }
        self.define(&name, kw.line, kw.column)?;
        let mut fields = Vec::new();
        if self.is_punct('{') {
            self.next();
            while !self.is_punct('}') {
                fields.push(self.field()?);
            }
            self.next();
        }
        self.model.objects.push(ObjectType { name, fields });
        Ok(())
    }

    fn field(&mut self) -> Result<FieldDef, SchemaError> {
        self.skip_description();
        let name = self.name()?;
        let mut args = Vec::new();
        if self.is_punct('(') {
            self.next();
            while !self.is_punct(')') {
                args.push(self.input_value()?);
            }
            self.next();
        }
        self.expect_punct(':')?;
        let ty = self.type_ref()?;
        self.directives()?;
        Ok(FieldDef { name, args, ty })
    }

    fn input_value(&mut self) -> Result<InputValue, SchemaError> {
        self.skip_description();
        let name = self.name()?;
        self.expect_punct(':')?;
        let ty = self.type_ref()?;
        let default = if self.is_punct('=') {
            self.next();
            Some(self.value()?)
        } else {
            None
        };
        self.directives()?;
        Ok(InputValue { name, ty, default })
    }

    fn type_ref(&mut self) -> Result<TypeRef, SchemaError> {
        let inner = if self.is_punct('[') {
            self.next();
            let t = self.type_ref()?;
            self.expect_punct(']')?;
            TypeRef::List(Box::new(t))
        } else {
            let t = self.peek().clone();
            let n = self.name()?;
            self.refs.push((n.clone(), t.line, t.column));
            TypeRef::Named(n)
        };
        if self.is_punct('!') {
            self.next();
            Ok(TypeRef::NonNull(Box::new(inner)))
        } else {
            Ok(inner)
        }
    }

    /// Parses a constant value and returns its normalised source text.
    fn value(&mut self) -> Result<String, SchemaError> {
        let t = self.next();
        Ok(match t.tok {
            Tok::Name(n) => n,
            Tok::Num(n) => n,
            Tok::Str(s) => format!("{s:?}"),
            Tok::Punct('$') => format!("${}", self.name()?),
            Tok::Punct('[') => {
                let mut items = Vec::new();
                while !self.is_punct(']') {
                    if self.peek().tok == Tok::Eof {
                        return Err(self.err_here("unterminated list value"));
                    }
                    items.push(self.value()?);
                }
                self.next();
                format!("[{}]", items.join(", "))
            }
            Tok::Punct('{') => {
                let mut items = Vec::new();
                while !self.is_punct('}') {
                    let k = self.name()?;
                    self.expect_punct(':')?;
                    items.push(format!("{k}: {}", self.value()?));
                }
                self.next();
                format!("{{{}}}", items.join(", "))
            }
            other => {
                return Err(syntax(
                    t.line,
                    t.column,
                    &format!("expected a value, found {}", describe(&other)),
                ))
            }
        })
    }

    fn directives(&mut self) -> Result<(), SchemaError> {
        while self.is_punct('@') {
            let t = self.next();
            let name = self.name()?;
            self.warn(t.line, t.column, format!("directive `@{name}` ignored"));
            if self.is_punct('(') {
                self.next();
                while !self.is_punct(')') {
                    self.name()?;
                    self.expect_punct(':')?;
                    self.value()?;
                }
                self.next();
            }
        }
        Ok(())
    }

    fn input_type(&mut self) -> Result<(), SchemaError> {
        let kw = self.next();
        let name = self.name()?;
        self.define(&name, kw.line, kw.column)?;
        self.directives()?;
        let mut fields = Vec::new();
        if self.is_punct('{') {
            self.next();
            while !self.is_punct('}') {
                fields.push(self.input_value()?);
            }
            self.next();
        }
        self.model.inputs.push(InputType { name, fields });
        Ok(())
    }

    fn enum_type(&mut self) -> Result<(), SchemaError> {
        let kw = self.next();
        let name = self.name()?;
        self.define(&name, kw.line, kw.column)?;
        self.directives()?;
        let mut values = Vec::new();
        if self.is_punct('{') {
            self.next();
            while !self.is_punct('}') {
                self.skip_description();
                values.push(self.name()?);
                self.directives()?;
            }
            self.next();
        }
        self.model.enums.push(EnumType { name, values });
        Ok(())
    }

    fn skip_abstract(&mut self, kw: &str) -> Result<(), SchemaError> {
        let t = self.next();
        let name = self.name()?;
        self.define(&name, t.line, t.column)?;
        self.model.skipped.push(name.clone());
        self.warn(
            t.line,
            t.column,
            format!("{kw} `{name}` is not supported and was skipped"),
        );
        if kw == "interface" {
            while !self.is_punct('{')
                && !matches!(self.peek().tok, Tok::Eof)
                && !self.at_definition()
            {
                self.next();
            }
            if self.is_punct('{') {
                self.skip_block()?;
            }
        } else {
            self.directives()?;
            if self.is_punct('=') {
                self.next();
                if self.is_punct('|') {
                    self.next();
                }
                self.name()?;
                while self.is_punct('|') {
                    self.next();
                    self.name()?;
                }
            }
        }
        Ok(())
    }

    fn at_definition(&self) -> bool {
        matches!(&self.peek().tok, Tok::Name(n) if matches!(n.as_str(),
            "type" | "input" | "enum" | "scalar" | "interface" | "union" | "schema" | "extend" | "directive"))
            && self.pos > 0
            && matches!(
                self.toks[self.pos - 1].tok,
                Tok::Punct('}') | Tok::Name(_) | Tok::Str(_)
            )
            && self.toks[self.pos].line != self.toks[self.pos - 1].line
    }

    /// Skips a balanced `{ ... }` block if one follows.
    fn skip_block(&mut self) -> Result<(), SchemaError> {
        if !self.is_punct('{') {
            return Ok(());
        }
        let open = self.peek().clone();
        let mut depth = 0usize;
        loop {
            match self.next().tok {
                Tok::Punct('{') => depth += 1,
                Tok::Punct('}') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Tok::Eof => return Err(syntax(open.line, open.column, "unbalanced `{`")),
                _ => {}
            }
        }
    }

    fn skip_definition(&mut self) -> Result<(), SchemaError> {
        // keyword, name, then anything up to and including an optional block
        self.next();
        while !self.is_punct('{') && self.peek().tok != Tok::Eof && !self.at_definition() {
            self.next();
        }
        self.skip_block()
    }

    fn skip_directive_definition(&mut self) -> Result<(), SchemaError> {
        self.expect_punct('@')?;
        self.name()?;
        if self.is_punct('(') {
            self.next();
            while !self.is_punct(')') {
                // argument types are not resolved for ignored definitions
                self.skip_description();
                self.name()?;
                self.expect_punct(':')?;
                let before = self.refs.len();
                self.type_ref()?;
                self.refs.truncate(before);
                if self.is_punct('=') {
                    self.next();
                    self.value()?;
                }
            }
            self.next();
        }
        if self.peek().tok == Tok::Name("repeatable".into()) {
            self.next();
        }
        if self.peek().tok != Tok::Name("on".into()) {
            return Err(self.err_here("expected `on` in directive definition"));
        }
        self.next();
        if self.is_punct('|') {
            self.next();
        }
        self.name()?;
        while self.is_punct('|') {
            self.next();
            self.name()?;
        }
        Ok(())
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Name(n) => format!("`{n}`"),
        Tok::Punct(c) => format!("`{c}`"),
        Tok::Spread => "`...`".into(),
        Tok::Str(_) => "a string".into(),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_sdl(text: &str) -> Result<SchemaModel, SchemaError> {
    let parser = Parser {
        toks: lex(text)?,
        pos: 0,
        model: SchemaModel::default(),
        refs: Vec::new(),
        defined: BTreeSet::new(),
    };
    parser.document()
}

/// Serialises the supported subset back to SDL.
pub fn to_sdl(model: &SchemaModel) -> String {
    let mut out = String::new();
    for s in &model.scalars {
        let _ = writeln!(out, "scalar {s}\n");
    }
    for e in &model.enums {
        let _ = writeln!(out, "enum {} {{", e.name);
        for v in &e.values {
            let _ = writeln!(out, "  {v}");
        }
        out.push_str("}\n\n");
    }
    let input_value = |v: &InputValue| match &v.default {
        Some(d) => format!("{}: {} = {d}", v.name, v.ty),
        None => format!("{}: {}", v.name, v.ty),
    };
    for i in &model.inputs {
        let _ = writeln!(out, "input {} {{", i.name);
        for f in &i.fields {
            let _ = writeln!(out, "  {}", input_value(f));
        }
        out.push_str("}\n\n");
    }
    for o in &model.objects {
        let _ = writeln!(out, "type {} {{", o.name);
        for f in &o.fields {
            let args = if f.args.is_empty() {
                String::new()
            } else {
                format!(
                    "({})",
                    f.args
                        .iter()
                        .map(input_value)
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            };
            let _ = writeln!(out, "  {}{args}: {}", f.name, f.ty);
        }
        out.push_str("}\n\n");
    }
    out
}

// ------------------------------------------------------- type graph mapping

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeGraphOptions {
    /// Also map input types and `*Payload` object types to node types.
    pub include_inputs: bool,
}

fn is_payload(name: &str) -> bool {
    name.ends_with("Payload")
}

/// Names of the object/input types that become node types.
pub fn node_type_names(model: &SchemaModel, options: TypeGraphOptions) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = model
        .objects
        .iter()
        .filter(|o| !ROOT_TYPES.contains(&o.name.as_str()))
        .filter(|o| options.include_inputs || !is_payload(&o.name))
        .map(|o| o.name.clone())
        .collect();
    if options.include_inputs {
        out.extend(model.inputs.iter().map(|i| i.name.clone()));
    }
    out
}

/// Resolves a type name or a prefix of one (e.g. `Repo` -> `Repository`).
fn resolve_type(name: &str, candidates: &BTreeSet<String>) -> Option<String> {
    if candidates.contains(name) {
        return Some(name.to_string());
    }
    let mut hits = candidates.iter().filter(|c| c.starts_with(name));
    match (hits.next(), hits.next()) {
        (Some(h), None) => Some(h.clone()),
        _ => None,
    }
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Target node type of a field that refers to another node: either directly
/// object-typed, or an `ID` field named `<type>Id` standing for a reference.
fn reference_target(name: &str, ty: &TypeRef, nodes: &BTreeSet<String>) -> Option<String> {
    let base = ty.base();
    if nodes.contains(base) {
        return Some(base.to_string());
    }
    if base == "ID" && name != "id" {
        let stem = name
            .strip_suffix("Ids")
            .or_else(|| name.strip_suffix("Id"))?;
        return resolve_type(&capitalise(stem), nodes);
    }
    None
}

pub fn to_type_graph(
    model: &SchemaModel,
    options: TypeGraphOptions,
) -> Result<TypeGraph, SchemaError> {
    let names = node_type_names(model, options);
    let mut node_types = Vec::new();
    let mut edge_types = Vec::new();
    let mut visit = |owner: &str, fields: Vec<(&str, &TypeRef)>| {
        let mut attributes = Vec::new();
        for (fname, ty) in fields {
            if fname == "id" {
                continue;
            }
            if let Some(target) = reference_target(fname, ty, &names) {
                edge_types.push(EdgeType::new(format!("{owner}.{fname}"), owner, target));
            } else if model.is_leaf(ty.base()) {
                attributes.push(Attribute {
                    name: fname.to_string(),
                    kind: ty.base().to_string(),
                    list: ty.is_list(),
                    non_null: ty.is_non_null(),
                });
            }
        }
        node_types.push(NodeType {
            name: owner.to_string(),
            attributes,
        });
    };
    for o in &model.objects {
        if names.contains(&o.name) {
            visit(
                &o.name,
                o.fields.iter().map(|f| (f.name.as_str(), &f.ty)).collect(),
            );
        }
    }
    for i in &model.inputs {
        if names.contains(&i.name) {
            visit(
                &i.name,
                i.fields.iter().map(|f| (f.name.as_str(), &f.ty)).collect(),
            );
        }
    }
    Ok(TypeGraph::new(node_types, edge_types)?)
}

// ---------------------------------------------------------- skeleton rules

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonResult {
    pub rules: Vec<RuleSpec>,
    /// Root fields that matched no naming pattern, as `Type.field`.
    pub unhandled: Vec<String>,
}

fn node_id(ty: &str) -> String {
    let mut c = ty.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Derives editable rule skeletons from `create*`, `update*`, `delete*` and
/// `get*` root fields. The pattern for a type `T` consists of `T`, one
/// context node per type holding a list of `T`, and the targets of `T`'s
/// singular references.
pub fn derive_rule_skeletons(model: &SchemaModel) -> Result<SkeletonResult, SchemaError> {
    let tg = to_type_graph(model, TypeGraphOptions::default())?;
    let names = node_type_names(model, TypeGraphOptions::default());
    let mut rules = Vec::new();
    let mut unhandled = Vec::new();
    let roots = [
        ("Mutation", OperationKind::Mutation),
        ("Query", OperationKind::Query),
    ];
    for (root, kind) in roots {
        let Some(obj) = model.object(root) else {
            continue;
        };
        for field in &obj.fields {
            let parsed = ["create", "update", "delete", "get"].iter().find_map(|p| {
                let rest = field.name.strip_prefix(p)?;
                resolve_type(rest, &names).map(|t| (*p, t))
            });
            let Some((verb, target)) = parsed else {
                unhandled.push(format!("{root}.{}", field.name));
                continue;
            };
            rules.push(skeleton(
                model,
                &tg,
                &field.name,
                kind,
                verb,
                &target,
                field,
            ));
        }
    }
    Ok(SkeletonResult { rules, unhandled })
}

fn skeleton(
    model: &SchemaModel,
    tg: &TypeGraph,
    name: &str,
    kind: OperationKind,
    verb: &str,
    target: &str,
    field: &FieldDef,
) -> RuleSpec {
    let main_tag = match verb {
        "create" => ChangeTag::Create,
        "delete" => ChangeTag::Delete,
        _ => ChangeTag::Preserve,
    };
    let main = node_id(target);
    let mut nodes = vec![RuleNodeSpec {
        id: main.as_str().into(),
        ty: target.to_string(),
        tag: main_tag,
    }];
    let mut edges = Vec::new();
    let mut context: BTreeMap<String, String> = BTreeMap::new();
    let mut context_node = |ty: &str, nodes: &mut Vec<RuleNodeSpec>| -> String {
        context
            .entry(ty.to_string())
            .or_insert_with(|| {
                let id = node_id(ty);
                nodes.push(RuleNodeSpec {
                    id: id.as_str().into(),
                    ty: ty.to_string(),
                    tag: ChangeTag::Preserve,
                });
                id
            })
            .clone()
    };
    // references field name -> context node id, for binding heuristics
    let mut by_field: BTreeMap<String, String> = BTreeMap::new();
    for et in tg.edge_types() {
        if et.target != target || et.source == target {
            continue;
        }
        let (owner, fname) = et.name.split_once('.').unwrap();
        let is_list = model
            .object(owner)
            .and_then(|o| o.field(fname))
            .is_some_and(|f| f.ty.is_list());
        if !is_list {
            continue;
        }
        let ctx = context_node(&et.source, &mut nodes);
        edges.push(RuleEdgeSpec {
            id: et.name.as_str().into(),
            ty: et.name.clone(),
            src: ctx.as_str().into(),
            tgt: main.as_str().into(),
            tag: main_tag,
        });
    }
    for et in tg.edge_types() {
        if et.source != target || et.target == target {
            continue;
        }
        let (owner, fname) = et.name.split_once('.').unwrap();
        let singular = model
            .object(owner)
            .and_then(|o| o.field(fname))
            .is_some_and(|f| !f.ty.is_list());
        if !singular {
            continue;
        }
        let ctx = context_node(&et.target, &mut nodes);
        by_field.insert(fname.to_string(), ctx.clone());
        edges.push(RuleEdgeSpec {
            id: et.name.as_str().into(),
            ty: et.name.clone(),
            src: main.as_str().into(),
            tgt: ctx.as_str().into(),
            tag: main_tag,
        });
    }
    let mut bindings = BTreeMap::new();
    for arg in &field.args {
        if arg.ty.base() != "ID" {
            continue;
        }
        let node = if arg.name == "id" && main_tag != ChangeTag::Create {
            Some(main.clone())
        } else if let Some(stem) = arg.name.strip_suffix("Id") {
            by_field.get(stem).cloned().or_else(|| {
                let ty = resolve_type(
                    &capitalise(stem),
                    &node_type_names(model, TypeGraphOptions::default()),
                )?;
                nodes
                    .iter()
                    .find(|n| n.ty == ty && n.tag != ChangeTag::Create)
                    .map(|n| n.id.to_string())
            })
        } else {
            None
        };
        if let Some(n) = node {
            bindings.insert(arg.name.clone(), n.as_str().into());
        }
    }
    RuleSpec {
        name: name.to_string(),
        kind,
        bootstrap: false,
        skeleton: true,
        nodes,
        edges,
        call: CallSpec {
            operation: String::new(),
            document_template: String::new(),
            bindings,
        },
    }
}
