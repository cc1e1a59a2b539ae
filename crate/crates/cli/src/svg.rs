//! Minimal SVG emission for scatter plots (samples against mode centres)
//! and line curves (truncation curves, trajectories). Output is plain
//! well-formed XML with numeric content only.

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 640.0;
const PAD: f64 = 48.0;

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for (x, y) in &s.points {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
            ymin = ymin.min(*y);
            ymax = ymax.max(*y);
        }
    }
    if !xmin.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (xmin, xmax) = pad(xmin, xmax);
    let (ymin, ymax) = pad(ymin, ymax);
    (xmin, xmax, ymin, ymax)
}

fn mapper(series: &[Series]) -> impl Fn(f64, f64) -> (f64, f64) {
    let (xmin, xmax, ymin, ymax) = bounds(series);
    move |x: f64, y: f64| {
        let px = PAD + (x - xmin) / (xmax - xmin) * (W - 2.0 * PAD);
        let py = H - PAD - (y - ymin) / (ymax - ymin) * (H - 2.0 * PAD);
        (px, py)
    }
}

fn document(title: &str, body: String) -> String {
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<title>{title}</title>\n",
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "{body}</svg>\n"
        ),
        w = W,
        h = H,
        title = title,
        body = body
    )
}

/// Scatter plot of one or more point sets.
pub fn scatter(title: &str, series: &[Series]) -> String {
    let to_px = mapper(series);
    let mut body = String::new();
    for (si, s) in series.iter().enumerate() {
        body.push_str(&format!("<g id=\"series-{si}\" fill=\"{}\">\n", s.color));
        for (x, y) in &s.points {
            let (px, py) = to_px(*x, *y);
            body.push_str(&format!(
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill-opacity=\"0.6\"/>\n"
            ));
        }
        body.push_str("</g>\n");
        let ly = 20.0 + 16.0 * si as f64;
        body.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            PAD, s.color, s.label
        ));
    }
    document(title, body)
}

/// Connected line plot; each series becomes one polyline.
pub fn curves(title: &str, series: &[Series]) -> String {
    let to_px = mapper(series);
    let mut body = String::new();
    for (si, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| {
                let (px, py) = to_px(*x, *y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            s.color
        ));
        let ly = 20.0 + 16.0 * si as f64;
        body.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            PAD, s.color, s.label
        ));
    }
    document(title, body)
}

/// Structural XML well-formedness: every opened tag closes in order. Used
/// by tests; kept here so the check matches what the emitter produces.
pub fn is_well_formed_xml(text: &str) -> bool {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        rest = &rest[start + 1..];
        let Some(end) = rest.find('>') else {
            return false;
        };
        let tag = &rest[..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name.trim() => {}
                _ => return false,
            }
        } else if tag.ends_with('/') {
            continue; // self-closing
        } else {
            let name: String = tag
                .split_whitespace()
                .next()
                .unwrap_or_default()
                .to_string();
            if name.is_empty() {
                return false;
            }
            stack.push(name);
        }
    }
    stack.is_empty()
}
