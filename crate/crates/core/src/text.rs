//! Tokenizer shared by the `.lair`, `.dprog` and host-program readers.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// `%name`
    Value(String),
    /// `@name`
    Symbol(String),
    /// `^name`
    Label(String),
    /// Identifiers, keywords, numbers and `256x512xi16`-style shape words.
    Word(String),
    Arrow,
    Punct(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Value(s) => write!(f, "%{s}"),
            Tok::Symbol(s) => write!(f, "@{s}"),
            Tok::Label(s) => write!(f, "^{s}"),
            Tok::Word(s) => write!(f, "`{s}`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Punct(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Splits `src` into tokens. `//` starts a comment running to end of line.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let start = i;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c == '-' && chars.get(i + 1) == Some(&'>') {
            i += 2;
            Tok::Arrow
        } else if matches!(c, '%' | '@' | '^') {
            i += 1;
            let s = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            if s == i {
                return Err(LexError { pos, message: format!("expected a name after `{c}`") });
            }
            let name: String = chars[s..i].iter().collect();
            match c {
                '%' => Tok::Value(name),
                '@' => Tok::Symbol(name),
                _ => Tok::Label(name),
            }
        } else if is_word_char(c)
            || (c == '-'
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_alphanumeric() || *n == '.'))
        {
            i += 1;
            while i < chars.len() {
                let ch = chars[i];
                let exp_sign = (ch == '-' || ch == '+')
                    && matches!(chars[i - 1], 'e' | 'E')
                    && chars[start..i]
                        .iter()
                        .find(|x| **x != '-')
                        .is_some_and(|x| x.is_ascii_digit())
                    && !chars[start..i].iter().any(|x| *x == 'x' || *x == 'X');
                if is_word_char(ch) || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            Tok::Word(chars[start..i].iter().collect())
        } else if "(){}[]<>,:=*+".contains(c) {
            i += 1;
            Tok::Punct(c)
        } else {
            return Err(LexError { pos, message: format!("unexpected character `{c}`") });
        };
        col += i - start;
        out.push(Token { tok, pos });
    }
    Ok(out)
}

/// Cursor over a token list with position-aware expectation helpers.
pub struct Cursor {
    toks: Vec<Token>,
    idx: usize,
    end: Pos,
}

impl Cursor {
    pub fn new(toks: Vec<Token>, src: &str) -> Self {
        let lines = src.split('\n').count().max(1);
        let last = src.rsplit('\n').next().unwrap_or("");
        let end = Pos { line: lines, col: last.chars().count() + 1 };
        Cursor { toks, idx: 0, end }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.tok)
    }

    pub fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.toks.get(self.idx + ahead).map(|t| &t.tok)
    }

    pub fn pos(&self) -> Pos {
        self.toks.get(self.idx).map(|t| t.pos).unwrap_or(self.end)
    }

    pub fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|t| t.tok.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    pub fn describe_next(&self) -> String {
        self.peek().map(|t| t.to_string()).unwrap_or_else(|| "end of input".into())
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    pub fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    pub fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, c: char) -> Result<(), (Pos, String)> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err((self.pos(), format!("expected `{c}`, found {}", self.describe_next())))
        }
    }

    pub fn expect_arrow(&mut self) -> Result<(), (Pos, String)> {
        if self.peek() == Some(&Tok::Arrow) {
            self.idx += 1;
            Ok(())
        } else {
            Err((self.pos(), format!("expected `->`, found {}", self.describe_next())))
        }
    }

    pub fn expect_word(&mut self, w: &str) -> Result<(), (Pos, String)> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err((self.pos(), format!("expected `{w}`, found {}", self.describe_next())))
        }
    }

    pub fn word(&mut self) -> Result<String, (Pos, String)> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.idx += 1;
                Ok(w)
            }
            _ => Err((self.pos(), format!("expected a word, found {}", self.describe_next()))),
        }
    }

    pub fn value(&mut self) -> Result<String, (Pos, String)> {
        match self.peek() {
            Some(Tok::Value(w)) => {
                let w = w.clone();
                self.idx += 1;
                Ok(w)
            }
            _ => Err((self.pos(), format!("expected a %value, found {}", self.describe_next()))),
        }
    }

    pub fn symbol(&mut self) -> Result<String, (Pos, String)> {
        match self.peek() {
            Some(Tok::Symbol(w)) => {
                let w = w.clone();
                self.idx += 1;
                Ok(w)
            }
            _ => Err((self.pos(), format!("expected an @symbol, found {}", self.describe_next()))),
        }
    }

    pub fn integer<T: std::str::FromStr>(&mut self) -> Result<T, (Pos, String)> {
        let pos = self.pos();
        let w = self.word()?;
        w.parse::<T>().map_err(|_| (pos, format!("expected an integer, found `{w}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn shape_words_and_numbers() {
        assert_eq!(
            words("tensor<256x512xi16> -1.5e-3 -inf"),
            vec![
                Tok::Word("tensor".into()),
                Tok::Punct('<'),
                Tok::Word("256x512xi16".into()),
                Tok::Punct('>'),
                Tok::Word("-1.5e-3".into()),
                Tok::Word("-inf".into()),
            ]
        );
    }

    #[test]
    fn arrows_names_and_comments() {
        assert_eq!(
            words("%a -> @b // trailing\n^bb0"),
            vec![
                Tok::Value("a".into()),
                Tok::Arrow,
                Tok::Symbol("b".into()),
                Tok::Label("bb0".into()),
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("a\n  b").unwrap();
        assert_eq!(toks[1].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("a ; b").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 3 });
    }
}
