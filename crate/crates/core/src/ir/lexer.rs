use super::Loc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    Bang,
    Question,
    /// `'name`
    Quoted(String),
    /// Unquoted word; may contain `-` after the first character (`deadlock-on`).
    Word(String),
    /// Everything after the `using` keyword, verbatim.
    Raw(String),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Question => "`?`".into(),
            Tok::Quoted(s) => format!("`'{s}`"),
            Tok::Word(s) => format!("`{s}`"),
            Tok::Raw(_) => "strategy text".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

#[derive(Debug, Clone)]
pub(crate) struct LexError {
    pub loc: Loc,
    pub found: char,
}

fn is_word_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `text` into tokens. `---` and `***` start comments running to the
/// end of the line.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc { line, col };
        if c.is_whitespace() {
            advance!();
            continue;
        }
        let rest3: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if rest3 == "---" || rest3 == "***" {
            while i < chars.len() && chars[i] != '\n' {
                advance!();
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            ':' => Some(Tok::Colon),
            '.' => Some(Tok::Dot),
            '!' => Some(Tok::Bang),
            '?' => Some(Tok::Question),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, loc });
            advance!();
            continue;
        }
        if c == '\'' {
            advance!();
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                advance!();
            }
            if start == i {
                return Err(LexError { loc, found: '\'' });
            }
            out.push(Token { tok: Tok::Quoted(chars[start..i].iter().collect()), loc });
            continue;
        }
        if is_word_start(c) {
            let start = i;
            while i < chars.len()
                && (is_word_char(chars[i]) || (chars[i] == '-' && i + 1 < chars.len() && is_word_char(chars[i + 1])))
            {
                advance!();
            }
            let word: String = chars[start..i].iter().collect();
            let is_using = word == "using";
            out.push(Token { tok: Tok::Word(word), loc });
            if is_using {
                while i < chars.len() && chars[i].is_whitespace() {
                    advance!();
                }
                let raw_loc = Loc { line, col };
                let raw: String = chars[i..].iter().collect();
                out.push(Token { tok: Tok::Raw(raw), loc: raw_loc });
                i = chars.len();
            }
            continue;
        }
        return Err(LexError { loc, found: c });
    }
    out.push(Token { tok: Tok::Eof, loc: Loc { line, col } });
    Ok(out)
}
