//! Layout interchange files.
//!
//! ```text
//! {"schema": ["heading", ...],
//!  "layouts": [
//!   {"elements": [
//!     {"p": [1, 0, ...], "geom": {"kind": "box", "v": [xl, yt, xr, yb]}},
//!     ...]},
//!   ...]}
//! ```
//!
//! Geometry kinds: `point` (2 values), `box` (4), `centerbox` (4 values
//! `x, y, w, h` plus `"flip"`), `triangle` (6), `posedpiece` (2 values plus
//! `"pose"` and `"piece"`). Numbers are written with 9 significant digits.
//! On input an element may give `"class": "<name>"` instead of `"p"`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{ClassSchema, Element, Geometry, Layout};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema: Vec<String>,
    layouts: Vec<RawLayout>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    elements: Vec<RawElement>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    #[serde(default)]
    p: Option<Vec<f64>>,
    #[serde(default)]
    class: Option<String>,
    geom: ParsedGeom,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeom {
    kind: String,
    v: Vec<f64>,
    #[serde(default)]
    flip: Option<f64>,
    #[serde(default)]
    pose: Option<u8>,
    #[serde(default)]
    piece: Option<u8>,
}

#[derive(Deserialize)]
#[serde(try_from = "RawGeom")]
struct ParsedGeom(Geometry);

impl TryFrom<RawGeom> for ParsedGeom {
    type Error = String;

    fn try_from(raw: RawGeom) -> std::result::Result<Self, String> {
        let want = |n: usize| {
            if raw.v.len() == n {
                Ok(())
            } else {
                Err(format!("geometry {:?} needs {n} values, got {}", raw.kind, raw.v.len()))
            }
        };
        let v = &raw.v;
        let g = match raw.kind.as_str() {
            "point" => {
                want(2)?;
                Geometry::Point { x: v[0], y: v[1] }
            }
            "box" => {
                want(4)?;
                Geometry::Box { xl: v[0], yt: v[1], xr: v[2], yb: v[3] }
            }
            "centerbox" => {
                want(4)?;
                let flip = raw.flip.ok_or("centerbox needs a \"flip\" field")?;
                Geometry::CenterBox { x: v[0], y: v[1], w: v[2], h: v[3], flip }
            }
            "triangle" => {
                want(6)?;
                let mut t = [0.0; 6];
                t.copy_from_slice(v);
                Geometry::Triangle { v: t }
            }
            "posedpiece" => {
                want(2)?;
                Geometry::PosedPiece {
                    x: v[0],
                    y: v[1],
                    pose: raw.pose.ok_or("posedpiece needs a \"pose\" field")?,
                    piece: raw.piece.ok_or("posedpiece needs a \"piece\" field")?,
                }
            }
            other => return Err(format!("unknown geometry kind {other:?}")),
        };
        Ok(ParsedGeom(g))
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses interchange text. With `expected`, every class named by the file
/// must exist in that schema and the file schema must equal it.
pub fn layouts_from_json(text: &str, expected: Option<&ClassSchema>) -> Result<Vec<Layout>> {
    let raw: RawFile = serde_json::from_str(text).map_err(parse_error)?;
    if let Some(expected) = expected {
        if let Some(unknown) = raw.schema.iter().find(|n| expected.index_of(n).is_none()) {
            return Err(Error::Schema(format!("class {unknown:?} is not in the expected schema {expected:?}")));
        }
        if raw.schema.as_slice() != expected.names() {
            return Err(Error::Schema(format!("file schema {:?} differs from expected {expected:?}", raw.schema)));
        }
    }
    let schema = ClassSchema::new(raw.schema)?;
    raw.layouts
        .into_iter()
        .map(|layout| {
            let elements = layout
                .elements
                .into_iter()
                .map(|e| {
                    let p = match (e.p, e.class) {
                        (Some(p), _) => p,
                        (None, Some(name)) => {
                            let c = schema
                                .index_of(&name)
                                .ok_or_else(|| Error::Schema(format!("unknown class name {name:?}")))?;
                            let mut p = vec![0.0; schema.len()];
                            p[c] = 1.0;
                            p
                        }
                        (None, None) => return Err(Error::Schema("element needs either \"p\" or \"class\"".into())),
                    };
                    Ok(Element::new(p, e.geom.0))
                })
                .collect::<Result<Vec<_>>>()?;
            Layout::new(schema.clone(), elements)
        })
        .collect()
}

pub fn read_layout_file(path: impl AsRef<Path>) -> Result<Vec<Layout>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    layouts_from_json(&text, None)
}

pub fn read_layout_file_with_schema(path: impl AsRef<Path>, expected: &ClassSchema) -> Result<Vec<Layout>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    layouts_from_json(&text, Some(expected))
}

/// Rounds to 9 significant digits and prints the shortest decimal for it.
pub(crate) fn fmt_num(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("float round trip");
    format!("{rounded}")
}

fn push_list(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_num(*v));
    }
    out.push(']');
}

/// Serializes layouts that share one schema.
pub fn layouts_to_json(layouts: &[Layout]) -> Result<String> {
    let Some(first) = layouts.first() else {
        return Err(Error::Schema("nothing to write".into()));
    };
    let schema = first.schema();
    let mut out = String::from("{\"schema\": [");
    for (i, name) in schema.names().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&serde_json::to_string(name).expect("string encodes"));
    }
    out.push_str("],\n \"layouts\": [");
    for (li, layout) in layouts.iter().enumerate() {
        if layout.schema() != schema {
            return Err(Error::Schema(format!("layout {li} uses schema {:?}, expected {schema:?}", layout.schema())));
        }
        if layout.is_empty() {
            return Err(Error::Schema(format!("layout {li} has no elements")));
        }
        out.push_str(if li > 0 { ",\n  " } else { "\n  " });
        out.push_str("{\"elements\": [");
        for (ei, e) in layout.elements().iter().enumerate() {
            out.push_str(if ei > 0 { ",\n    " } else { "\n    " });
            out.push_str("{\"p\": ");
            push_list(&mut out, &e.p);
            out.push_str(", \"geom\": {\"kind\": \"");
            out.push_str(e.geom.kind().name());
            out.push_str("\", \"v\": ");
            match e.geom {
                Geometry::CenterBox { x, y, w, h, flip } => {
                    push_list(&mut out, &[x, y, w, h]);
                    let _ = write!(out, ", \"flip\": {}", fmt_num(flip));
                }
                Geometry::PosedPiece { x, y, pose, piece } => {
                    push_list(&mut out, &[x, y]);
                    let _ = write!(out, ", \"pose\": {pose}, \"piece\": {piece}");
                }
                g => push_list(&mut out, &g.params()),
            }
            out.push_str("}}");
        }
        out.push_str("]}");
    }
    out.push_str("\n]}\n");
    Ok(out)
}

pub fn write_layout_file(layouts: &[Layout], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = layouts_to_json(layouts)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_box_layout() -> Layout {
        let s = ClassSchema::documents();
        Layout::new(
            s,
            vec![
                Element::one_hot(0, 6, Geometry::Box { xl: 0.1, yt: 0.1, xr: 0.9, yb: 0.2 }),
                Element::one_hot(1, 6, Geometry::Box { xl: 0.1, yt: 0.25, xr: 0.9, yb: 1.0 / 3.0 }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_third_has_nine_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(123456789.4), "123456789");
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        let l = two_box_layout();
        write_layout_file(&[l.clone(), l.clone()], &path).unwrap();
        let back = read_layout_file(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].len(), 2);
        let Geometry::Box { yb, .. } = back[0].elements()[1].geom else { panic!() };
        assert!((yb - 1.0 / 3.0).abs() < 1e-9);
        // Writing the read-back values reproduces the same bytes.
        let again = layouts_to_json(&back).unwrap();
        assert_eq!(again, std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn unknown_class_name_is_a_schema_error() {
        let text = r#"{"schema": ["heading","paragraph","tablee","figure","caption","list"],
            "layouts": [{"elements": [{"p": [1,0,0,0,0,0], "geom": {"kind": "box", "v": [0,0,1,1]}}]}]}"#;
        let err = layouts_from_json(text, Some(&ClassSchema::documents())).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");

        let by_name = r#"{"schema": ["heading","paragraph"],
            "layouts": [{"elements": [{"class": "tablee", "geom": {"kind": "point", "v": [0,0]}}]}]}"#;
        assert!(matches!(layouts_from_json(by_name, None), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_text_reports_position() {
        let text = "{\"schema\": [\"a\"],\n \"layouts\": [ {\"elements\": [}]}";
        match layouts_from_json(text, None) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_count =
            r#"{"schema": ["a"], "layouts": [{"elements": [{"p": [1], "geom": {"kind": "box", "v": [0,0,1]}}]}]}"#;
        assert!(matches!(layouts_from_json(bad_count, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn mixed_schemas_rejected() {
        let a = two_box_layout();
        let b = Layout::new(ClassSchema::points(), vec![Element::one_hot(0, 1, Geometry::Point { x: 0.5, y: 0.5 })])
            .unwrap();
        assert!(matches!(layouts_to_json(&[a, b]), Err(Error::Schema(_))));
    }

    #[test]
    fn every_kind_round_trips() {
        let s = ClassSchema::tangram();
        let mut p = vec![0.0; 56];
        p[13] = 1.0;
        let pieces =
            Layout::new(s, vec![Element::new(p, Geometry::PosedPiece { x: 0.25, y: 0.75, pose: 5, piece: 1 })])
                .unwrap();
        let clip = Layout::new(
            ClassSchema::clipart(),
            vec![Element::one_hot(2, 6, Geometry::CenterBox { x: 0.5, y: 0.4, w: 0.2, h: 0.1, flip: 0.75 })],
        )
        .unwrap();
        let tri = Layout::new(
            ClassSchema::points(),
            vec![Element::one_hot(0, 1, Geometry::Triangle { v: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] })],
        )
        .unwrap();
        for l in [pieces, clip, tri] {
            let text = layouts_to_json(std::slice::from_ref(&l)).unwrap();
            assert_eq!(layouts_from_json(&text, None).unwrap(), vec![l]);
        }
    }

    proptest! {
        #[test]
        fn read_write_round_trip(
            coords in proptest::collection::vec(proptest::array::uniform4(0.0f64..1.0), 1..9),
            probs in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let elements: Vec<Element> = coords
                .iter()
                .map(|c| Element::new(probs.clone(), Geometry::Box { xl: c[0], yt: c[1], xr: c[2], yb: c[3] }))
                .collect();
            let l = Layout::new(ClassSchema::documents(), elements).unwrap();
            let text = layouts_to_json(std::slice::from_ref(&l)).unwrap();
            let back = layouts_from_json(&text, Some(&ClassSchema::documents())).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].len(), l.len());
            for (a, b) in l.elements().iter().zip(back[0].elements()) {
                for (x, y) in a.p.iter().zip(&b.p) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
                for (x, y) in a.geom.params().iter().zip(b.geom.params()) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
            prop_assert_eq!(layouts_to_json(&back).unwrap(), text);
        }
    }
}
