export type Polarity = "positive" | "negative";

export interface Stroke {
  objectId: number;
  polarity: Polarity;
  points: Array<[number, number]>; // image coordinates
}

export interface ScribbleDocument {
  frame: number;
  strokes: Array<{
    object_id: number;
    polarity: Polarity;
    points: Array<[number, number]>;
  }>;
}

/**
 * Collects in-progress and committed strokes for one annotation round.
 *
 * Points are stored in image coordinates exactly as mapped from the
 * pointer; serialization rounds to integer pixels and performs no other
 * resampling, so what the engine receives is what was drawn.
 */
export class StrokeBuffer {
  private committed: Stroke[] = [];
  private active: Stroke | null = null;

  beginStroke(objectId: number, polarity: Polarity, point: [number, number]): void {
    if (this.active) this.endStroke();
    this.active = { objectId, polarity, points: [point] };
  }

  extend(point: [number, number]): void {
    if (!this.active) return;
    const last = this.active.points[this.active.points.length - 1];
    if (last[0] === point[0] && last[1] === point[1]) return;
    this.active.points.push(point);
  }

  endStroke(): void {
    if (!this.active) return;
    this.committed.push(this.active);
    this.active = null;
  }

  undo(): void {
    if (this.active) {
      this.active = null;
      return;
    }
    this.committed.pop();
  }

  clear(): void {
    this.committed = [];
    this.active = null;
  }

  get strokes(): ReadonlyArray<Stroke> {
    return this.active ? [...this.committed, this.active] : this.committed;
  }

  get isEmpty(): boolean {
    return this.strokes.length === 0;
  }

  hasPositive(): boolean {
    return this.strokes.some((s) => s.polarity === "positive");
  }

  objectsWithPositive(): number[] {
    const ids = new Set<number>();
    for (const s of this.strokes) {
      if (s.polarity === "positive") ids.add(s.objectId);
    }
    return [...ids].sort((a, b) => a - b);
  }

  toDocument(frame: number): ScribbleDocument {
    return {
      frame,
      strokes: this.strokes.map((s) => ({
        object_id: s.objectId,
        polarity: s.polarity,
        points: s.points.map(([x, y]) => [Math.round(x), Math.round(y)] as [number, number]),
      })),
    };
  }
}
