use std::collections::HashMap;
use std::fmt;

/// Learnable prompt vectors per task.
pub const PROMPT_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Direct,
    Sequential,
    Explanation,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Direct, Task::Sequential, Task::Explanation];

    pub fn index(self) -> usize {
        match self {
            Task::Direct => 0,
            Task::Sequential => 1,
            Task::Explanation => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Direct => "direct",
            Task::Sequential => "sequential",
            Task::Explanation => "explanation",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    User(u32),
    Item(u32),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::User(u) => write!(f, "user_{u}"),
            Entity::Item(i) => write!(f, "item_{i}"),
        }
    }
}

/// `user_1234` → `["user", "_", "12", "34"]`; the last chunk may be one digit.
pub fn tokenize_id(entity: Entity) -> Vec<String> {
    let (prefix, n) = match entity {
        Entity::User(u) => ("user", u),
        Entity::Item(i) => ("item", i),
    };
    let digits = n.to_string();
    let mut out = vec![prefix.to_string(), "_".to_string()];
    out.extend(
        digits
            .as_bytes()
            .chunks(2)
            .map(|c| String::from_utf8(c.to_vec()).expect("ascii digits")),
    );
    out
}

/// Inverse of [`tokenize_id`]; non-canonical splits are rejected.
pub fn detokenize_id<S: AsRef<str>>(tokens: &[S]) -> Option<Entity> {
    if tokens.len() < 3 || tokens[1].as_ref() != "_" {
        return None;
    }
    let digits: String = tokens[2..].iter().map(|t| t.as_ref()).collect();
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    let entity = match tokens[0].as_ref() {
        "user" => Entity::User(n),
        "item" => Entity::Item(n),
        _ => return None,
    };
    let canonical = tokenize_id(entity);
    (canonical.len() == tokens.len() && canonical.iter().zip(tokens).all(|(a, b)| a == b.as_ref()))
        .then_some(entity)
}

/// Fixed subword vocabulary: specials, prompt slots, words and digit chunks.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    first_digit: u32,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const EOS: u32 = 1;

    pub fn new() -> Self {
        let mut tokens: Vec<String> = vec!["<pad>".into(), "</s>".into()];
        for task in 1..=3 {
            for slot in 1..=PROMPT_LEN {
                tokens.push(format!("<P{task}.{slot}>"));
            }
        }
        tokens.extend(["user", "item", "_"].map(String::from));
        let first_digit = tokens.len() as u32;
        tokens.extend((0..10).map(|d| d.to_string()));
        tokens.extend((0..100).map(|d| format!("{d:02}")));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            first_digit,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Number of subwords that only spell digits.
    pub fn digital_count(&self) -> usize {
        self.tokens.len() - self.first_digit as usize
    }

    pub fn prompt_slot(&self, task: Task, slot: usize) -> u32 {
        debug_assert!(slot < PROMPT_LEN);
        2 + (task.index() * PROMPT_LEN + slot) as u32
    }

    /// Flat prompt-vector index `task * PROMPT_LEN + slot` when `id` is a slot token.
    pub fn as_prompt_slot(&self, id: u32) -> Option<usize> {
        let first = 2;
        let last = first + 3 * PROMPT_LEN as u32;
        (first..last).contains(&id).then(|| (id - first) as usize)
    }

    pub fn encode_id(&self, entity: Entity) -> Vec<u32> {
        tokenize_id(entity)
            .iter()
            .map(|t| self.id(t).expect("every id subword is in the vocabulary"))
            .collect()
    }

    pub fn decode_id(&self, ids: &[u32]) -> Option<Entity> {
        if ids.iter().any(|&i| i as usize >= self.tokens.len()) {
            return None;
        }
        let toks: Vec<&str> = ids.iter().map(|&i| self.token(i)).collect();
        detokenize_id(&toks)
    }
}
