//! Complex numbers as `[re, im]` pairs; matrices as lists of rows; maps with
//! structured keys as pair lists.

use num_complex::Complex64;

pub type Pair = [f64; 2];

pub fn to_pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

pub fn from_pair(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub mod matrix {
    use super::*;
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<Complex64>) -> Vec<Vec<Pair>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| to_pair(m[(i, j)])).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<Pair>]) -> Result<DMatrix<Complex64>, String> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != m) {
            return Err("matrix rows must be non-empty and of equal length".into());
        }
        Ok(DMatrix::from_fn(n, m, |i, j| from_pair(rows[i][j])))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<Complex64>, D::Error> {
        let rows = Vec::<Vec<Pair>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Maps with non-string keys as lists of `[key, value]` pairs.
pub mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(
        m: &BTreeMap<K, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}
