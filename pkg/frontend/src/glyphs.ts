// Mini-SVG previews of alphabet templates (the desk alphabet is synthetic,
// so symbols render as their canonical stroke shapes rather than font text).

export interface AlphabetEntry {
  symbol: number;
  strokes: Array<Array<[number, number]>>;
}

export interface AlphabetFile {
  templates: AlphabetEntry[];
}

export function glyphSvg(strokes: Array<Array<[number, number]>>, size = 24): string {
  const paths = strokes
    .map((pts) => {
      if (pts.length === 1) {
        const [x, y] = pts[0];
        return `<circle cx="${(x * size).toFixed(1)}" cy="${(y * size).toFixed(1)}" r="1.2" fill="currentColor"/>`;
      }
      const d = pts
        .map(([x, y], i) => `${i === 0 ? "M" : "L"}${(x * size).toFixed(1)} ${(y * size).toFixed(1)}`)
        .join(" ");
      return `<path d="${d}" fill="none" stroke="currentColor" stroke-width="1.6" stroke-linecap="round"/>`;
    })
    .join("");
  return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size} ${size}" width="${size}" height="${size}">${paths}</svg>`;
}

export function glyphLookup(file: AlphabetFile): Map<number, string> {
  const out = new Map<number, string>();
  for (const entry of file.templates) out.set(entry.symbol, glyphSvg(entry.strokes));
  return out;
}
