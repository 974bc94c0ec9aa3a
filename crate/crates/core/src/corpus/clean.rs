//! SwDA markup removal and tokenization.
//!
//! Cleaning rules, applied in order:
//! 1. angle-bracket annotations (`<laughter>`, `<<talking>>`) are removed with their content;
//! 2. discourse-marker braces `{D ... }` lose the opener and the closing brace, keeping the text;
//! 3. repairs `[ reparandum + repair ]` keep only the repair (nesting allowed);
//!    a bracket without `+` keeps its content, stray `+` and `]` are dropped;
//! 4. slash-unit terminators `/`, overlap markers `#` and dash runs `--` are removed;
//! 5. `.`, `,`, `?`, `!` become standalone tokens;
//! 6. lowercase, collapse whitespace, trim.

use std::sync::LazyLock;

use regex::Regex;

const PUNCT: [char; 4] = ['.', ',', '?', '!'];

pub fn clean_utterance(raw_text: &str) -> String {
    static ANGLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<+[^<>]*>+").unwrap());
    static BRACE_OPEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[A-Z]?").unwrap());
    static DASHES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-{2,}").unwrap());

    let text = ANGLE.replace_all(raw_text, " ");
    let text = BRACE_OPEN.replace_all(&text, " ");
    let text = text.replace('}', " ");
    let text = resolve_repairs(&text);
    let text = DASHES.replace_all(&text, " ");
    let text: String = text
        .chars()
        .map(|c| match c {
            '/' | '#' | '<' | '>' => ' ',
            c => c,
        })
        .collect();
    separate_punctuation(&text.to_lowercase()).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split cleaned text into tokens. Terminal punctuation is separated first, so
/// `tokenize(&tokenize(t).join(" "))` reproduces `tokenize(t)`.
pub fn tokenize(clean_text: &str) -> Vec<String> {
    separate_punctuation(clean_text).split_whitespace().map(str::to_string).collect()
}

fn separate_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if PUNCT.contains(&c) {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

#[derive(Default)]
struct RepairFrame {
    reparandum: String,
    repair: String,
    seen_plus: bool,
}

impl RepairFrame {
    fn push_str(&mut self, s: &str) {
        let target = if self.seen_plus { &mut self.repair } else { &mut self.reparandum };
        target.push(' ');
        target.push_str(s);
        target.push(' ');
    }

    fn push(&mut self, c: char) {
        if self.seen_plus {
            self.repair.push(c)
        } else {
            self.reparandum.push(c)
        }
    }

    fn resolve(self) -> String {
        if self.seen_plus {
            self.repair
        } else {
            self.reparandum
        }
    }
}

fn resolve_repairs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut stack: Vec<RepairFrame> = Vec::new();
    for c in text.chars() {
        match c {
            '[' => stack.push(RepairFrame::default()),
            ']' => {
                if let Some(frame) = stack.pop() {
                    let kept = frame.resolve();
                    match stack.last_mut() {
                        Some(parent) => parent.push_str(&kept),
                        None => {
                            out.push(' ');
                            out.push_str(&kept);
                            out.push(' ');
                        }
                    }
                }
            }
            '+' => {
                if let Some(frame) = stack.last_mut() {
                    frame.seen_plus = true;
                }
            }
            c => match stack.last_mut() {
                Some(frame) => frame.push(c),
                None => out.push(c),
            },
        }
    }
    // unterminated brackets
    while let Some(frame) = stack.pop() {
        let kept = frame.resolve();
        match stack.last_mut() {
            Some(parent) => parent.push_str(&kept),
            None => {
                out.push(' ');
                out.push_str(&kept);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(clean_utterance("Yeah. /"), "yeah .");
        assert_eq!(clean_utterance(""), "");
        assert_eq!(clean_utterance("{D Well, } I think so. /"), "well , i think so .");
    }

    #[test]
    fn repairs_keep_the_repair() {
        assert_eq!(clean_utterance("[ I, + I ] think so. /"), "i think so .");
        assert_eq!(clean_utterance("[ [ I + I ] + we ] went. /"), "we went .");
        assert_eq!(clean_utterance("I play the [ piano, + piano ] at home. /"), "i play the piano at home .");
        assert_eq!(clean_utterance("[ just this ] one"), "just this one");
        assert_eq!(clean_utterance("[ unterminated + fixed"), "fixed");
    }

    #[test]
    fn annotations_and_dashes() {
        assert_eq!(clean_utterance("jazz <laughter>. /"), "jazz .");
        assert_eq!(clean_utterance("<<talking to child>> okay --"), "okay");
        assert_eq!(clean_utterance("-- in a band downtown. /"), "in a band downtown .");
        assert_eq!(clean_utterance("{C And } # then # bye-bye. /"), "and then bye-bye .");
        assert_eq!(clean_utterance("+ continued stuff ]"), "continued stuff");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("yeah ."), vec!["yeah", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("is that right ?"), vec!["is", "that", "right", "?"]);
        assert_eq!(tokenize("right?really!"), vec!["right", "?", "really", "!"]);
    }

    proptest! {
        #[test]
        fn cleaned_text_has_no_markup(raw in "[ a-zA-Z{}\\[\\]+/<>#.,?!-]{0,60}") {
            let clean = clean_utterance(&raw);
            prop_assert!(!clean.chars().any(|c| "{}[]+/".contains(c)), "markup left in {:?}", clean);
            prop_assert_eq!(clean.trim(), clean.as_str());
            prop_assert!(!clean.contains("  "));
            prop_assert_eq!(clean.to_lowercase(), clean.clone());
        }

        #[test]
        fn tokenize_is_idempotent(raw in "[ a-z.,?!']{0,60}") {
            let tokens = tokenize(&clean_utterance(&raw));
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }

        #[test]
        fn cleaning_is_a_fixed_point(raw in "[ a-zA-Z{}\\[\\]+/<>.,?!]{0,60}") {
            let once = clean_utterance(&raw);
            prop_assert_eq!(clean_utterance(&once), once);
        }
    }
}
