//! The IMP decision-function language: loop-free programs of affine
//! assignments and conditionals, their conversion to and from decision
//! trees, and a C-like text form.
//!
//! Text grammar (whitespace-insensitive, `//` comments allowed):
//!
//! ```text
//! program := header? block | header '{' block '}'
//! header  := 'double' IDENT '(' ( 'double' IDENT (',' 'double' IDENT)* )? ')'
//! block   := item* ( 'return' ret ';' )?
//! item    := 'if' '(' expr '>' '0' ')' '{' block '}' 'else' '{' block '}'
//!          | OUTPUT '=' expr ';'                      // OUTPUT is o0, o1, ...
//! ret     := expr | '(' expr (',' expr)* ')'
//! expr    := '-'? term (('+' | '-') term)*
//! term    := coef ('*' IDENT)? | IDENT
//! coef    := NUMBER | '??'
//! ```
//!
//! Without a header, features are named `x0 .. x{p-1}` and `p` is one more
//! than the largest index used. `return (e1, .., em)` assigns every output.

mod ast;
mod convert;
mod text;

pub use ast::{expand, Coef, Expr, ImpProgram, Stmt, TraceEntry};
pub use convert::{
    program_from_model, program_to_tree, program_to_tree_with_cap, tree_to_program,
    tree_to_program_counted, DEFAULT_HEIGHT_CAP,
};
pub use text::{emit_code, format_coef, parse_program, parse_program_named, ParsedProgram};
