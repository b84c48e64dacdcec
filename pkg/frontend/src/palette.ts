// Object colors, index = mask palette index (0 = background).
// Must stay in sync with the server's mask palette so overlays and
// stroke colors agree visually.
export const OBJECT_COLORS: ReadonlyArray<readonly [number, number, number]> = [
  [0, 0, 0],
  [230, 25, 75],
  [60, 180, 75],
  [255, 225, 25],
  [0, 130, 200],
  [245, 130, 48],
  [145, 30, 180],
  [70, 240, 240],
];

export const POSITIVE_STROKE_COLOR = "#2ecc40"; // green
export const NEGATIVE_STROKE_COLOR = "#ff4136"; // red

export function objectColor(objectId: number): string {
  const [r, g, b] = OBJECT_COLORS[objectId % OBJECT_COLORS.length];
  return `rgb(${r}, ${g}, ${b})`;
}
