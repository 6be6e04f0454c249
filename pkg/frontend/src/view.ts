// Top-down camera and layer state. All world/screen conversions live here
// so the renderer stays a pure scene builder.

export interface Layers {
  cubes: boolean;
  arrows: boolean;
  aoa: boolean;
  tracker: boolean;
  agents: boolean;
}

export const STALE_AFTER_S = 1.0;

export class ViewState {
  centerX = 0;
  centerY = 0;
  pixelsPerMeter = 60;
  width: number;
  height: number;
  layers: Layers = { cubes: true, arrows: true, aoa: true, tracker: true, agents: true };

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
  }

  toScreen(wx: number, wy: number): [number, number] {
    // world x up the screen, world y to the left: robot-centric top view
    const sx = this.width / 2 - (wy - this.centerY) * this.pixelsPerMeter;
    const sy = this.height / 2 - (wx - this.centerX) * this.pixelsPerMeter;
    return [sx, sy];
  }

  scale(meters: number): number {
    return meters * this.pixelsPerMeter;
  }

  pan(dxPixels: number, dyPixels: number): void {
    this.centerY += dxPixels / this.pixelsPerMeter;
    this.centerX += dyPixels / this.pixelsPerMeter;
  }

  zoom(factor: number): void {
    this.pixelsPerMeter = Math.min(400, Math.max(10, this.pixelsPerMeter * factor));
  }

  follow(wx: number, wy: number): void {
    this.centerX = wx;
    this.centerY = wy;
  }

  toggle(layer: keyof Layers): void {
    this.layers[layer] = !this.layers[layer];
  }

  isStale(stalenessSeconds: number): boolean {
    return stalenessSeconds > STALE_AFTER_S;
  }
}
