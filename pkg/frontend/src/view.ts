/**
 * Letterboxed viewport transform between canvas (display) space and
 * image space.  The inverse mapping is the only coordinate processing
 * applied to drawn strokes.
 */
export class Viewport {
  scale = 1;
  offsetX = 0;
  offsetY = 0;

  constructor(
    public imageWidth = 0,
    public imageHeight = 0,
    public canvasWidth = 0,
    public canvasHeight = 0,
  ) {
    this.fit();
  }

  resize(canvasWidth: number, canvasHeight: number): void {
    this.canvasWidth = canvasWidth;
    this.canvasHeight = canvasHeight;
    this.fit();
  }

  setImage(width: number, height: number): void {
    this.imageWidth = width;
    this.imageHeight = height;
    this.fit();
  }

  private fit(): void {
    if (!this.imageWidth || !this.imageHeight || !this.canvasWidth || !this.canvasHeight) {
      this.scale = 1;
      this.offsetX = 0;
      this.offsetY = 0;
      return;
    }
    this.scale = Math.min(
      this.canvasWidth / this.imageWidth,
      this.canvasHeight / this.imageHeight,
    );
    this.offsetX = (this.canvasWidth - this.imageWidth * this.scale) / 2;
    this.offsetY = (this.canvasHeight - this.imageHeight * this.scale) / 2;
  }

  imageToDisplay(x: number, y: number): [number, number] {
    return [x * this.scale + this.offsetX, y * this.scale + this.offsetY];
  }

  /** Inverse transform; null when the point falls outside the image. */
  displayToImage(x: number, y: number): [number, number] | null {
    if (this.scale === 0) return null;
    const ix = (x - this.offsetX) / this.scale;
    const iy = (y - this.offsetY) / this.scale;
    if (ix < 0 || iy < 0 || ix > this.imageWidth - 1 || iy > this.imageHeight - 1) {
      return null;
    }
    return [ix, iy];
  }
}

export interface ViewState {
  sessionId: string | null;
  frame: number;
  frameCount: number;
  round: number;
  objectId: number;
  polarity: "positive" | "negative";
  opacity: number;
  playing: boolean;
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    frame: 0,
    frameCount: 0,
    round: 0,
    objectId: 1,
    polarity: "positive",
    opacity: 0.5,
    playing: false,
  };
}

export function clampFrame(state: ViewState, frame: number): number {
  if (state.frameCount === 0) return 0;
  return Math.max(0, Math.min(state.frameCount - 1, frame));
}
