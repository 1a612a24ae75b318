/// Serde adapter for [`PolyMatrix`]: entries in row-major order, each a list
/// of `{powers: {var: exponent}, coef}` terms.
pub mod poly_matrix {
    use std::collections::BTreeMap;

    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use crate::poly::{Monomial, PolyMatrix, Polynomial, Var};

    #[derive(Serialize, Deserialize)]
    struct Term {
        powers: BTreeMap<String, u32>,
        coef: f64,
    }

    #[derive(Serialize, Deserialize)]
    struct Doc {
        rows: usize,
        cols: usize,
        entries: Vec<Vec<Term>>,
    }

    pub fn serialize<S: Serializer>(m: &PolyMatrix, ser: S) -> Result<S::Ok, S::Error> {
        let entries = m
            .entries()
            .iter()
            .map(|p| {
                p.terms()
                    .map(|(mono, coef)| Term {
                        powers: mono.powers().iter().map(|&(v, k)| (v.name(), k)).collect(),
                        coef,
                    })
                    .collect()
            })
            .collect();
        Doc {
            rows: m.rows(),
            cols: m.cols(),
            entries,
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<PolyMatrix, D::Error> {
        let doc = Doc::deserialize(de)?;
        if doc.entries.len() != doc.rows * doc.cols {
            return Err(D::Error::custom("entry count does not match dimensions"));
        }
        let mut polys = Vec::with_capacity(doc.entries.len());
        for terms in doc.entries {
            let mut out = Vec::with_capacity(terms.len());
            for t in terms {
                let mut powers = Vec::new();
                for (name, k) in t.powers {
                    let v = Var::parse(&name).ok_or_else(|| D::Error::custom(format!("unknown variable '{name}'")))?;
                    powers.push((v, k));
                }
                out.push((Monomial::from_powers(powers), t.coef));
            }
            polys.push(Polynomial::from_terms(out));
        }
        Ok(PolyMatrix::from_fn(doc.rows, doc.cols, |i, j| polys[i * doc.cols + j].clone()))
    }
}
