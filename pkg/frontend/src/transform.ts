/**
 * Table-to-screen mapping: the 770x550 mm projection view letterboxed
 * into the canvas, aspect ratio preserved exactly.
 */

export const TABLE_WIDTH_MM = 770;
export const TABLE_HEIGHT_MM = 550;

export class ViewTransform {
  readonly scale: number;
  readonly offsetX: number;
  readonly offsetY: number;

  constructor(
    readonly cssWidth: number,
    readonly cssHeight: number,
    readonly tableWidthMm: number = TABLE_WIDTH_MM,
    readonly tableHeightMm: number = TABLE_HEIGHT_MM,
  ) {
    if (cssWidth <= 0 || cssHeight <= 0) {
      throw new Error('viewport must have positive size');
    }
    this.scale = Math.min(
      cssWidth / tableWidthMm,
      cssHeight / tableHeightMm,
    );
    this.offsetX = (cssWidth - tableWidthMm * this.scale) / 2;
    this.offsetY = (cssHeight - tableHeightMm * this.scale) / 2;
  }

  mmToCss(p: [number, number]): [number, number] {
    return [
      this.offsetX + p[0] * this.scale,
      this.offsetY + p[1] * this.scale,
    ];
  }

  cssToMm(p: [number, number]): [number, number] {
    return [
      (p[0] - this.offsetX) / this.scale,
      (p[1] - this.offsetY) / this.scale,
    ];
  }

  /** Whether a css point falls inside the projected table area. */
  containsCss(p: [number, number]): boolean {
    const [x, y] = this.cssToMm(p);
    return x >= 0 && x <= this.tableWidthMm && y >= 0 && y <= this.tableHeightMm;
  }
}
