//! Content sniffers backing confirmation sniffing and the whitelist engine.
//!
//! These deliberately mirror the shallow checks real read-blocking
//! implementations perform: none of them parses the full body.

/// Outcome of a sniffer run. `consumed_prefix_len` is the number of body
/// bytes examined before the verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnifferVerdict {
    pub matches: bool,
    pub consumed_prefix_len: usize,
}

impl SnifferVerdict {
    fn at(matches: bool, consumed: usize, body_len: usize) -> Self {
        debug_assert!(consumed <= body_len);
        SnifferVerdict {
            matches,
            consumed_prefix_len: consumed,
        }
    }
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

fn skip_ws(body: &[u8], mut i: usize) -> usize {
    while i < body.len() && is_ws(body[i]) {
        i += 1;
    }
    i
}

/// Shallow JSON check: skip whitespace, require `{`, skip whitespace,
/// require `"`, then scan the first key. An unescaped control character
/// (U+0000..=U+001F) or end of input before the closing quote fails the
/// check; a closing quote (backslash escapes honored) passes it. Nothing
/// past the first key is ever read.
pub fn sniff_json(body: &[u8]) -> SnifferVerdict {
    let mut i = skip_ws(body, 0);
    if i >= body.len() || body[i] != b'{' {
        let consumed = (i + 1).min(body.len());
        return SnifferVerdict::at(false, consumed, body.len());
    }
    i = skip_ws(body, i + 1);
    if i >= body.len() || body[i] != b'"' {
        let consumed = (i + 1).min(body.len());
        return SnifferVerdict::at(false, consumed, body.len());
    }
    i += 1;
    while i < body.len() {
        match body[i] {
            b'\\' => {
                // Escaped pair: the escaped byte is never inspected.
                if i + 1 >= body.len() {
                    return SnifferVerdict::at(false, body.len(), body.len());
                }
                i += 2;
            }
            b'"' => return SnifferVerdict::at(true, i + 1, body.len()),
            b if b <= 0x1f => return SnifferVerdict::at(false, i + 1, body.len()),
            _ => i += 1,
        }
    }
    SnifferVerdict::at(false, body.len(), body.len())
}

/// XML check: after optional whitespace the body must start with `<`
/// followed by a letter, `!` or `?` (which also covers `<?xml`).
pub fn sniff_xml(body: &[u8]) -> SnifferVerdict {
    let i = skip_ws(body, 0);
    if i >= body.len() || body[i] != b'<' {
        let consumed = (i + 1).min(body.len());
        return SnifferVerdict::at(false, consumed, body.len());
    }
    match body.get(i + 1) {
        Some(b) if b.is_ascii_alphabetic() || *b == b'!' || *b == b'?' => {
            SnifferVerdict::at(true, i + 2, body.len())
        }
        Some(_) => SnifferVerdict::at(false, i + 2, body.len()),
        None => SnifferVerdict::at(false, body.len(), body.len()),
    }
}

/// Tag names the HTML check recognizes after `<`.
const HTML_TAGS: &[&str] = &[
    "html", "head", "body", "script", "iframe", "meta", "div", "a", "p", "table",
];

/// HTML check: after optional whitespace the body must start with `<!--`,
/// a case-insensitive `<!doctype`, or `<` plus a known tag name followed by
/// a tag terminator.
pub fn sniff_html(body: &[u8]) -> SnifferVerdict {
    let start = skip_ws(body, 0);
    let rest = &body[start.min(body.len())..];
    if rest.first() != Some(&b'<') {
        let consumed = (start + 1).min(body.len());
        return SnifferVerdict::at(false, consumed, body.len());
    }
    if rest.len() >= 4 && &rest[..4] == b"<!--" {
        return SnifferVerdict::at(true, start + 4, body.len());
    }
    let doctype = b"<!doctype";
    if rest.len() >= doctype.len() && rest[..doctype.len()].eq_ignore_ascii_case(doctype) {
        return SnifferVerdict::at(true, start + doctype.len(), body.len());
    }
    let mut end = 1;
    while end < rest.len() && rest[end].is_ascii_alphabetic() {
        end += 1;
    }
    let name = String::from_utf8_lossy(&rest[1..end]).to_ascii_lowercase();
    let terminated = match rest.get(end) {
        None => true,
        Some(b) => matches!(b, b'>' | b'/' | b' ' | b'\t' | b'\n' | b'\r'),
    };
    let matches = terminated && HTML_TAGS.contains(&name.as_str());
    let consumed = (start + end + 1).min(body.len());
    SnifferVerdict::at(matches, consumed, body.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object_with_quoted_key_matches() {
        assert!(sniff_json(b"{\"a\":1}").matches);
        assert!(sniff_json(b"  \t{ \"key\" : [1]}").matches);
    }

    #[test]
    fn json_raw_control_char_in_key_fails() {
        assert!(!sniff_json(b"{\"\x17-raw-control-char\":\"s\"}").matches);
        // The escaped variant is fine: the FSM skips escaped pairs.
        assert!(sniff_json(b"{\"\\\x17ok\":1}").matches);
    }

    #[test]
    fn json_array_fails() {
        assert!(!sniff_json(b"[1,2,3]").matches);
    }

    #[test]
    fn json_prepended_warning_fails() {
        assert!(!sniff_json(b"Warning: undefined index in /app.php{\"a\":1}").matches);
    }

    #[test]
    fn json_eof_inside_key_fails() {
        assert!(!sniff_json(b"{\"never-closed").matches);
        assert!(!sniff_json(b"{\"trailing-escape\\").matches);
        assert!(!sniff_json(b"").matches);
    }

    #[test]
    fn json_consumed_stops_at_first_key() {
        let body = b"{\"ab\":\"much more that must not be read\"}";
        let v = sniff_json(body);
        let close = 4; // index of the quote closing "ab"
        assert!(v.matches);
        assert_eq!(v.consumed_prefix_len, close + 1);
    }

    #[test]
    fn xml_prefixes() {
        assert!(sniff_xml(b"<?xml version=\"1.0\"?>").matches);
        assert!(!sniff_xml(b"{\"a\":1}").matches);
        assert!(sniff_xml(b"   <root/>").matches);
        assert!(sniff_xml(b"<!DOCTYPE x>").matches);
        assert!(!sniff_xml(b"< x>").matches);
        assert!(!sniff_xml(b"<").matches);
    }

    #[test]
    fn html_prefixes() {
        assert!(sniff_html(b"<!DOCTYPE html><html>").matches);
        assert!(!sniff_html(b"{\"a\":1}").matches);
        assert!(!sniff_html(b"<customtag>").matches);
        assert!(sniff_html(b"<!-- c -->").matches);
        assert!(sniff_html(b"  <a href=\"/x\">").matches);
        assert!(sniff_html(b"<table>").matches);
        // Known name followed by more tag-name characters is a different tag.
        assert!(!sniff_html(b"<ax>").matches);
    }
}
