// Highlight rendering. The service sends spans as Unicode code-point
// offsets; JavaScript strings index UTF-16 units, so offsets must be
// converted before slicing or astral characters shift the boundaries.

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

/** Number of Unicode code points in the string. */
export function codePointLength(text: string): number {
  let count = 0;
  for (const _ of text) count++;
  return count;
}

/** UTF-16 index corresponding to a code-point index. */
export function codePointToUtf16(text: string, cpIndex: number): number {
  let cp = 0;
  let utf16 = 0;
  for (const ch of text) {
    if (cp === cpIndex) return utf16;
    cp++;
    utf16 += ch.length;
  }
  if (cp === cpIndex) return utf16;
  throw new RangeError(`code point ${cpIndex} beyond end of text (${cp})`);
}

/** Slice by code-point offsets, mirroring the server's indexing. */
export function codePointSlice(text: string, start: number, end: number): string {
  return text.slice(codePointToUtf16(text, start), codePointToUtf16(text, end));
}

/**
 * Statement HTML with the given span wrapped in <mark>. An out-of-range or
 * empty span renders the plain statement and logs a console warning.
 */
export function renderHighlight(text: string, span: [number, number] | null): string {
  if (span === null) {
    return escapeHtml(text);
  }
  const [start, end] = span;
  if (start < 0 || end <= start || end > codePointLength(text)) {
    console.warn(`highlight span [${start}, ${end}) out of range; rendering without it`);
    return escapeHtml(text);
  }
  const a = codePointToUtf16(text, start);
  const b = codePointToUtf16(text, end);
  return (
    escapeHtml(text.slice(0, a)) +
    "<mark>" +
    escapeHtml(text.slice(a, b)) +
    "</mark>" +
    escapeHtml(text.slice(b))
  );
}
