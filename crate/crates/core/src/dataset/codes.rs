use serde::{Deserialize, Serialize};

/// Per-row category indices. Narrow vocabularies are stored in bytes; columns
/// dominated by one value (bag-of-words style) can be stored sparsely.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "layout", content = "data", rename_all = "snake_case")]
pub enum Codes {
    U8(Vec<u8>),
    U32(Vec<u32>),
    Sparse {
        len: usize,
        default: u32,
        /// Strictly increasing row ids whose code differs from `default`.
        rows: Vec<u32>,
        codes: Vec<u32>,
    },
}

impl Codes {
    pub fn from_vec(codes: Vec<u32>) -> Codes {
        if codes.iter().all(|&c| c <= u8::MAX as u32) {
            Codes::U8(codes.into_iter().map(|c| c as u8).collect())
        } else {
            Codes::U32(codes)
        }
    }

    /// Sparse layout; `entries` must be sorted by row and free of duplicates.
    pub fn sparse(len: usize, default: u32, entries: Vec<(u32, u32)>) -> Codes {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        let (rows, codes) = entries.into_iter().filter(|&(_, c)| c != default).unzip();
        Codes::Sparse {
            len,
            default,
            rows,
            codes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Codes::U8(v) => v.len(),
            Codes::U32(v) => v.len(),
            Codes::Sparse { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, row: usize) -> u32 {
        match self {
            Codes::U8(v) => v[row] as u32,
            Codes::U32(v) => v[row],
            Codes::Sparse {
                default,
                rows,
                codes,
                ..
            } => match rows.binary_search(&(row as u32)) {
                Ok(p) => codes[p],
                Err(_) => *default,
            },
        }
    }

    pub fn max_code(&self) -> Option<u32> {
        match self {
            Codes::U8(v) => v.iter().max().map(|&c| c as u32),
            Codes::U32(v) => v.iter().max().copied(),
            Codes::Sparse {
                len,
                default,
                codes,
                ..
            } => {
                let m = codes.iter().max().copied();
                if *len > codes.len() {
                    Some(m.map_or(*default, |m| m.max(*default)))
                } else {
                    m
                }
            }
        }
    }

    /// Visits every `(row, code)` pair in row order.
    pub fn for_each(&self, mut f: impl FnMut(usize, u32)) {
        match self {
            Codes::U8(v) => v.iter().enumerate().for_each(|(i, &c)| f(i, c as u32)),
            Codes::U32(v) => v.iter().enumerate().for_each(|(i, &c)| f(i, c)),
            Codes::Sparse {
                len,
                default,
                rows,
                codes,
            } => {
                let mut next = 0;
                for i in 0..*len {
                    if next < rows.len() && rows[next] as usize == i {
                        f(i, codes[next]);
                        next += 1;
                    } else {
                        f(i, *default);
                    }
                }
            }
        }
    }

    pub fn to_vec(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|_, c| out.push(c));
        out
    }
}

impl PartialEq for Codes {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.to_vec() == other.to_vec()
    }
}
