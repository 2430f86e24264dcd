use wcshape::export::{export_all, export_field, parse_csv, read_field_csv, FieldFormat};
use wcshape::{RectDomain, ScalarField, StructuredMesh};

fn mesh() -> StructuredMesh {
    StructuredMesh::new(RectDomain::new(-1.0, 0.5, 2.0, 2.0).unwrap(), 7, 4).unwrap()
}

#[test]
fn vtk_self_parse() {
    let mesh = mesh();
    let field = mesh.interpolate(|x, y| x * x - y);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.vtk");
    export_field(&mesh, &field, FieldFormat::Vtk, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let mut dims = None;
    let mut points = None;
    let mut origin = None;
    let mut values = Vec::new();
    let mut in_data = false;
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.first() {
            Some(&"DIMENSIONS") => dims = Some(words[1..].iter().map(|w| w.parse::<usize>().unwrap()).collect::<Vec<_>>()),
            Some(&"ORIGIN") => origin = Some((words[1].parse::<f64>().unwrap(), words[2].parse::<f64>().unwrap())),
            Some(&"POINT_DATA") => points = Some(words[1].parse::<usize>().unwrap()),
            Some(&"LOOKUP_TABLE") => in_data = true,
            Some(w) if in_data => values.push(w.parse::<f64>().unwrap()),
            _ => {}
        }
    }
    assert_eq!(dims.unwrap(), vec![8, 5, 1]);
    assert_eq!(points.unwrap(), mesh.node_count());
    assert_eq!(origin.unwrap(), (-1.0, 0.5));
    assert_eq!(values.len(), mesh.node_count());
    for (a, b) in values.iter().zip(field.iter()) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
    }
}

#[test]
fn csv_round_trip_keeps_nine_digits() {
    let mesh = mesh();
    let field = mesh.interpolate(|x, y| (x + 2.0 * y).sin() / 3.0);
    let dir = tempfile::tempdir().unwrap();
    export_all(&mesh, &field, dir.path(), "f").unwrap();
    let back = read_field_csv(&mesh, &dir.path().join("f.csv")).unwrap();
    for (a, b) in back.iter().zip(field.iter()) {
        assert!((a - b).abs() <= 5.000001e-9 * b.abs());
    }
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("f.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), mesh.node_count());
}

#[test]
fn csv_from_other_mesh_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let small = StructuredMesh::unit_square(3).unwrap();
    let path = dir.path().join("v.csv");
    export_field(&small, &ScalarField::zeros(16), FieldFormat::Csv, &path).unwrap();
    assert!(read_field_csv(&StructuredMesh::unit_square(4).unwrap(), &path).is_err());
    let shifted = StructuredMesh::new(RectDomain::new(0.0, 0.0, 2.0, 1.0).unwrap(), 3, 3).unwrap();
    assert!(read_field_csv(&shifted, &path).is_err());
}

#[test]
fn pgm_header_and_pixel_count() {
    let mesh = mesh();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.pgm");
    export_field(&mesh, &mesh.interpolate(|x, _| x), FieldFormat::Pgm, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(&tokens[..4], &["P2", "8", "5", "255"]);
    assert_eq!(tokens.len() - 4, mesh.node_count());
    let first_row: Vec<u32> = tokens[4..12].iter().map(|t| t.parse().unwrap()).collect();
    assert_eq!(first_row[0], 0);
    assert_eq!(first_row[7], 255);
}
