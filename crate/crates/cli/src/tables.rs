use comfy_table::presets::ASCII_MARKDOWN;
use comfy_table::{CellAlignment, Table};
use num_format::{Locale, ToFormattedString};

pub fn count(v: u64) -> String {
    v.to_formatted_string(&Locale::en)
}

/// Plain ASCII table; the first column is left aligned, the rest right
/// aligned.
pub fn table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut t = Table::new();
    t.load_preset(ASCII_MARKDOWN).set_header(header.to_vec());
    for row in rows {
        t.add_row(row);
    }
    for i in 1..header.len() {
        if let Some(col) = t.column_mut(i) {
            col.set_cell_alignment(CellAlignment::Right);
        }
    }
    t.to_string()
}
