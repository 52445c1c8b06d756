//! Shows the right-to-left reading order on a hand-built page: a full-width
//! banner panel above a 2x2 grid. Horizontal gaps split first (top before
//! bottom), vertical gaps second (right before left), so the grid reads
//! top-right, top-left, bottom-right, bottom-left.
//!
//! Run with `cargo run --example reading_order`.

use mangascribe::chapter::{BoundingBox, PageGraph, PanelNode, TextNode};
use mangascribe::transcript::{order_panels, order_texts};
use mangascribe::Result;

fn panel(id: &str, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<PanelNode> {
    Ok(PanelNode {
        id: id.to_string(),
        page: 0,
        bbox: BoundingBox::new(x1, y1, x2, y2)?,
    })
}

fn text(id: &str, content: &str, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<TextNode> {
    Ok(TextNode {
        id: id.to_string(),
        page: 0,
        bbox: BoundingBox::new(x1, y1, x2, y2)?,
        content: content.to_string(),
        essential_score: 1.0,
        category: None,
        gt_essential: None,
    })
}

fn main() -> Result<()> {
    let page = PageGraph {
        index: 1,
        characters: vec![],
        texts: vec![
            text("t_banner", "banner line", 350.0, 20.0, 650.0, 80.0)?,
            // Two texts inside the top-right panel: the right one speaks first.
            text("t_tr_left", "second in panel", 520.0, 160.0, 640.0, 220.0)?,
            text("t_tr_right", "first in panel", 700.0, 160.0, 920.0, 220.0)?,
            text("t_bl", "last on page", 80.0, 660.0, 380.0, 720.0)?,
        ],
        tails: vec![],
        panels: vec![
            panel("grid_bl", 20.0, 620.0, 480.0, 980.0)?,
            panel("banner", 20.0, 10.0, 980.0, 110.0)?,
            panel("grid_tl", 20.0, 130.0, 480.0, 600.0)?,
            panel("grid_br", 500.0, 620.0, 980.0, 980.0)?,
            panel("grid_tr", 500.0, 130.0, 980.0, 600.0)?,
        ],
        edges: Default::default(),
    };

    let panel_order = order_panels(&page);
    println!("panel reading order (right to left, top to bottom):");
    for (i, id) in panel_order.iter().enumerate() {
        println!("  {}. {id}", i + 1);
    }

    let text_order = order_texts(&page, &panel_order);
    println!("\ntext reading order:");
    for id in &text_order {
        let t = page.text(id).expect("ordered ids come from the page");
        println!("  {id:<10} {:?}", t.content);
    }
    Ok(())
}
